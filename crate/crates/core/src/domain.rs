//! Core vocabulary shared by the simulator, the twin, the policies and the
//! metrics. Everything here is a plain value type.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::envsim::LinkBudget;
use crate::error::{Error, Result};

/// Discrete simulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotClock {
    pub t: u64,
    slot_duration: f64,
}

impl SlotClock {
    pub fn new(slot_duration: f64) -> Result<Self> {
        if !(slot_duration > 0.0 && slot_duration.is_finite()) {
            return Err(Error::Invalid(format!(
                "slot_duration must be positive, got {slot_duration}"
            )));
        }
        Ok(Self {
            t: 0,
            slot_duration,
        })
    }

    /// Seconds per slot.
    pub fn slot_duration(&self) -> f64 {
        self.slot_duration
    }

    pub fn tick(&mut self) {
        self.t += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceClass {
    Embb,
    Urllc,
}

impl fmt::Display for ServiceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceClass::Embb => f.write_str("eMBB"),
            ServiceClass::Urllc => f.write_str("URLLC"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserTerminal {
    pub id: UserId,
    pub class: ServiceClass,
    pub link: LinkBudget,
}

/// The users of a scenario. Ids are dense: user `i` sits at index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSet {
    users: Vec<UserTerminal>,
}

impl UserSet {
    pub fn new(users: Vec<UserTerminal>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Empty("user set"));
        }
        for (i, u) in users.iter().enumerate() {
            if u.id.index() != i {
                return Err(Error::Invalid(format!(
                    "user ids must be dense and ordered, found {} at position {i}",
                    u.id
                )));
            }
        }
        Ok(Self { users })
    }

    /// `embb` eMBB users followed by `urllc` URLLC users, linked by `link(class, index_within_class)`.
    pub fn from_counts(
        embb: usize,
        urllc: usize,
        mut link: impl FnMut(ServiceClass, usize) -> LinkBudget,
    ) -> Result<Self> {
        let users = (0..embb)
            .map(|i| (ServiceClass::Embb, i))
            .chain((0..urllc).map(|i| (ServiceClass::Urllc, i)))
            .enumerate()
            .map(|(id, (class, k))| UserTerminal {
                id: UserId(id as u32),
                class,
                link: link(class, k),
            })
            .collect();
        Self::new(users)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserTerminal> {
        self.users.iter()
    }

    pub fn get(&self, id: UserId) -> Option<&UserTerminal> {
        self.users.get(id.index())
    }

    pub fn contains(&self, id: UserId) -> bool {
        id.index() < self.users.len()
    }

    pub fn class_of(&self, id: UserId) -> ServiceClass {
        self.users[id.index()].class
    }

    pub fn of_class(&self, class: ServiceClass) -> impl Iterator<Item = UserId> + '_ {
        self.users
            .iter()
            .filter(move |u| u.class == class)
            .map(|u| u.id)
    }

    pub fn count(&self, class: ServiceClass) -> usize {
        self.of_class(class).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QosRequirement {
    /// eMBB minimum rate, bits/second.
    pub embb_min_rate: f64,
    /// URLLC packet size, bits.
    pub urllc_packet_bits: f64,
    /// Maximum tolerated URLLC outage probability.
    pub urllc_outage_threshold: f64,
}

impl Default for QosRequirement {
    fn default() -> Self {
        Self {
            embb_min_rate: 0.0,
            urllc_packet_bits: 256.0,
            urllc_outage_threshold: 0.07,
        }
    }
}

impl QosRequirement {
    pub fn validate(&self) -> Result<()> {
        if !(self.urllc_packet_bits > 0.0 && self.urllc_packet_bits.is_finite()) {
            return Err(Error::Invalid(
                "urllc_packet_bits must be positive".to_string(),
            ));
        }
        if !(self.urllc_outage_threshold > 0.0 && self.urllc_outage_threshold < 1.0) {
            return Err(Error::Invalid(
                "urllc_outage_threshold out of range (0, 1)".to_string(),
            ));
        }
        if !(self.embb_min_rate >= 0.0 && self.embb_min_rate.is_finite()) {
            return Err(Error::Invalid(
                "embb_min_rate must be nonnegative".to_string(),
            ));
        }
        Ok(())
    }

    /// Offered URLLC load ζ·λ in bits per slot.
    pub fn urllc_load(&self, lambda: f64) -> f64 {
        self.urllc_packet_bits * lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceGrid {
    num_rbs: usize,
    rb_bandwidth: f64,
}

impl ResourceGrid {
    pub fn new(num_rbs: usize, rb_bandwidth: f64) -> Result<Self> {
        if num_rbs == 0 {
            return Err(Error::Invalid("num_rbs must be at least 1".to_string()));
        }
        if !(rb_bandwidth > 0.0 && rb_bandwidth.is_finite()) {
            return Err(Error::Invalid("rb_bandwidth must be positive".to_string()));
        }
        Ok(Self {
            num_rbs,
            rb_bandwidth,
        })
    }

    pub fn num_rbs(&self) -> usize {
        self.num_rbs
    }

    /// Hz per resource block.
    pub fn rb_bandwidth(&self) -> f64 {
        self.rb_bandwidth
    }

    /// Hz.
    pub fn system_bandwidth(&self) -> f64 {
        self.num_rbs as f64 * self.rb_bandwidth
    }
}

/// Owner of every resource block in one slot; `None` marks an idle block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AllocationMatrix {
    assignment: Vec<Option<UserId>>,
}

impl AllocationMatrix {
    pub fn new(assignment: Vec<Option<UserId>>) -> Self {
        Self { assignment }
    }

    pub fn unassigned(num_rbs: usize) -> Self {
        Self {
            assignment: vec![None; num_rbs],
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn get(&self, rb: usize) -> Option<UserId> {
        self.assignment[rb]
    }

    pub fn set(&mut self, rb: usize, user: Option<UserId>) {
        self.assignment[rb] = user;
    }

    pub fn as_slice(&self) -> &[Option<UserId>] {
        &self.assignment
    }

    /// Blocks held by `user`, in index order.
    pub fn blocks_of(&self, user: UserId) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, a)| **a == Some(user))
            .map(|(b, _)| b)
    }
}

impl fmt::Display for AllocationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.assignment.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match a {
                Some(u) => write!(f, "{u}")?,
                None => f.write_str("-")?,
            }
        }
        f.write_str("]")
    }
}

pub fn validate_allocation(
    m: &AllocationMatrix,
    grid: &ResourceGrid,
    users: &UserSet,
) -> Result<()> {
    if m.len() != grid.num_rbs() {
        return Err(Error::AllocationLength {
            expected: grid.num_rbs(),
            actual: m.len(),
        });
    }
    for (index, a) in m.as_slice().iter().enumerate() {
        if let Some(user) = *a {
            if !users.contains(user) {
                return Err(Error::UnknownUser { index, user });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SliceCounts {
    pub embb: usize,
    pub urllc: usize,
    pub unassigned: usize,
}

impl SliceCounts {
    pub fn total(&self) -> usize {
        self.embb + self.urllc + self.unassigned
    }
}

/// Per-class block counts. `m` must already be valid for `users`.
pub fn slice_of(m: &AllocationMatrix, users: &UserSet) -> SliceCounts {
    m.as_slice()
        .iter()
        .fold(SliceCounts::default(), |mut c, a| {
            match a.map(|u| users.class_of(u)) {
                Some(ServiceClass::Embb) => c.embb += 1,
                Some(ServiceClass::Urllc) => c.urllc += 1,
                None => c.unassigned += 1,
            }
            c
        })
}

/// Linear SNR per user (rows) and resource block (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    snr: Array2<f64>,
}

impl ChannelState {
    pub fn new(snr: Array2<f64>) -> Result<Self> {
        if snr.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite(
                "channel SNR must be finite and nonnegative".to_string(),
            ));
        }
        Ok(Self { snr })
    }

    pub fn zeros(num_users: usize, num_rbs: usize) -> Self {
        Self {
            snr: Array2::zeros((num_users, num_rbs)),
        }
    }

    pub fn snr(&self) -> &Array2<f64> {
        &self.snr
    }

    pub fn get(&self, user: UserId, rb: usize) -> f64 {
        self.snr[[user.index(), rb]]
    }

    pub fn num_users(&self) -> usize {
        self.snr.nrows()
    }

    pub fn num_rbs(&self) -> usize {
        self.snr.ncols()
    }
}

/// URLLC traffic seen in one slot. eMBB users are fully buffered and keep a
/// zero entry in `urllc_queue`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    /// Mean URLLC arrival rate λ(t) for the whole slice, packets/slot.
    pub lambda: f64,
    /// Backlog in bits, indexed by user id.
    pub urllc_queue: Vec<f64>,
}

impl TrafficState {
    pub fn new(lambda: f64, num_users: usize) -> Self {
        Self {
            lambda,
            urllc_queue: vec![0.0; num_users],
        }
    }

    pub fn embb_fully_buffered(&self) -> bool {
        true
    }

    pub fn queue(&self, user: UserId) -> f64 {
        self.urllc_queue[user.index()]
    }

    pub fn total_queue(&self) -> f64 {
        self.urllc_queue.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{Fading, LinkBudget};

    fn users(embb: usize, urllc: usize) -> UserSet {
        UserSet::from_counts(embb, urllc, |_, _| LinkBudget::new(10.0, Fading::Rayleigh)).unwrap()
    }

    #[test]
    fn validate_accepts_members_and_idle_blocks() {
        let grid = ResourceGrid::new(3, 1.0).unwrap();
        let m = AllocationMatrix::new(vec![Some(UserId(0)), Some(UserId(1)), None]);
        validate_allocation(&m, &grid, &users(1, 1)).unwrap();
    }

    #[test]
    fn validate_reports_unknown_user() {
        let grid = ResourceGrid::new(1, 1.0).unwrap();
        let m = AllocationMatrix::new(vec![Some(UserId(9))]);
        match validate_allocation(&m, &grid, &users(1, 0)) {
            Err(Error::UnknownUser { index: 0, user }) => assert_eq!(user, UserId(9)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_reports_length_mismatch() {
        let grid = ResourceGrid::new(3, 1.0).unwrap();
        let m = AllocationMatrix::unassigned(2);
        assert!(matches!(
            validate_allocation(&m, &grid, &users(1, 1)),
            Err(Error::AllocationLength {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn slice_counts() {
        // u0 eMBB, u1 URLLC
        let us = users(1, 1);
        let m = AllocationMatrix::new(vec![Some(UserId(0)), Some(UserId(1)), Some(UserId(0))]);
        assert_eq!(
            slice_of(&m, &us),
            SliceCounts {
                embb: 2,
                urllc: 1,
                unassigned: 0
            }
        );
        let idle = AllocationMatrix::unassigned(4);
        assert_eq!(
            slice_of(&idle, &us),
            SliceCounts {
                embb: 0,
                urllc: 0,
                unassigned: 4
            }
        );
    }

    #[test]
    fn grid_bandwidth_is_exact() {
        let g = ResourceGrid::new(50, 1e6).unwrap();
        assert_eq!(g.system_bandwidth(), 50.0 * 1e6);
        assert!(ResourceGrid::new(0, 1.0).is_err());
        assert!(ResourceGrid::new(1, 0.0).is_err());
    }

    #[test]
    fn qos_ranges() {
        QosRequirement::default().validate().unwrap();
        let bad = QosRequirement {
            urllc_outage_threshold: 1.5,
            ..Default::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("urllc_outage_threshold out of range"));
        let bad = QosRequirement {
            urllc_packet_bits: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn clock_ticks() {
        let mut c = SlotClock::new(1e-3).unwrap();
        c.tick();
        c.tick();
        assert_eq!(c.t, 2);
        assert!(SlotClock::new(0.0).is_err());
    }

    #[test]
    fn user_ids_dense() {
        let us = users(2, 3);
        assert_eq!(us.count(ServiceClass::Embb), 2);
        assert_eq!(
            us.of_class(ServiceClass::Urllc).collect::<Vec<_>>(),
            vec![UserId(2), UserId(3), UserId(4)]
        );
    }
}
