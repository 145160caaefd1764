//! Twin layer: a delayed, snapshot-based replica of the physical network.
//!
//! Delays are whole slots. The twin keeps a bounded ring of the physical
//! states it has observed and, on each sync, delivers the state captured
//! `delay` slots ago.

use std::collections::VecDeque;

use crate::domain::{ChannelState, QosRequirement, TrafficState};
use crate::envsim::PhysicalState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayClass {
    Minimal,
    Moderate(u64),
    Significant(u64),
}

impl DelayClass {
    pub fn slots(&self) -> u64 {
        match *self {
            DelayClass::Minimal => 0,
            DelayClass::Moderate(n) | DelayClass::Significant(n) => n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DelayClass::Minimal => "minimal",
            DelayClass::Moderate(_) => "moderate",
            DelayClass::Significant(_) => "significant",
        }
    }
}

/// Slot counts behind the MODERATE and SIGNIFICANT classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayTable {
    pub moderate: u64,
    pub significant: u64,
}

impl Default for DelayTable {
    fn default() -> Self {
        Self {
            moderate: 2,
            significant: 50,
        }
    }
}

impl DelayTable {
    pub fn validate(&self) -> Result<()> {
        if self.moderate > self.significant {
            return Err(Error::Invalid(format!(
                "delay classes must satisfy minimal <= moderate <= significant, got {} > {}",
                self.moderate, self.significant
            )));
        }
        Ok(())
    }

    pub fn class(&self, name: &str) -> Result<DelayClass> {
        match name {
            "minimal" => Ok(DelayClass::Minimal),
            "moderate" => Ok(DelayClass::Moderate(self.moderate)),
            "significant" => Ok(DelayClass::Significant(self.significant)),
            other => Err(Error::Invalid(format!("unknown delay class `{other}`"))),
        }
    }
}

/// An immutable copy of (channel, traffic, QoS) as the twin saw it.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinSnapshot {
    captured_at: u64,
    delivered_at: u64,
    channel: ChannelState,
    traffic: TrafficState,
    qos: QosRequirement,
    underflow: bool,
}

impl TwinSnapshot {
    pub fn new(
        captured_at: u64,
        delivered_at: u64,
        channel: ChannelState,
        traffic: TrafficState,
        qos: QosRequirement,
    ) -> Result<Self> {
        if delivered_at < captured_at {
            return Err(Error::Invalid(format!(
                "snapshot delivered at {delivered_at} before capture at {captured_at}"
            )));
        }
        if traffic.urllc_queue.len() != channel.num_users() {
            return Err(Error::Dimension {
                what: "snapshot traffic users",
                expected: channel.num_users(),
                actual: traffic.urllc_queue.len(),
            });
        }
        Ok(Self {
            captured_at,
            delivered_at,
            channel,
            traffic,
            qos,
            underflow: false,
        })
    }

    /// Zero-delay snapshot of `physical`.
    pub fn of(physical: &PhysicalState) -> Self {
        Self {
            captured_at: physical.clock.t,
            delivered_at: physical.clock.t,
            channel: physical.channel.clone(),
            traffic: physical.traffic.clone(),
            qos: physical.qos,
            underflow: false,
        }
    }

    pub fn captured_at(&self) -> u64 {
        self.captured_at
    }

    pub fn delivered_at(&self) -> u64 {
        self.delivered_at
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn traffic(&self) -> &TrafficState {
        &self.traffic
    }

    pub fn qos(&self) -> &QosRequirement {
        &self.qos
    }

    /// Set when the twin had less history than its configured delay.
    pub fn staleness_underflow(&self) -> bool {
        self.underflow
    }
}

pub fn staleness(s: &TwinSnapshot, now: u64) -> u64 {
    now.saturating_sub(s.captured_at)
}

/// The twin's state: observed history plus the latest delivered snapshot.
#[derive(Debug, Clone)]
pub struct DigitalTwin {
    delay: DelayClass,
    cadence: u64,
    depth: usize,
    history: VecDeque<PhysicalState>,
    latest: Option<TwinSnapshot>,
}

impl DigitalTwin {
    /// `cadence` is the number of slots between syncs. The ring holds
    /// `delay + 1` states at least.
    pub fn new(delay: DelayClass, cadence: u64, depth: usize) -> Result<Self> {
        if cadence == 0 {
            return Err(Error::Invalid(
                "twin cadence must be at least 1".to_string(),
            ));
        }
        let depth = depth.max(delay.slots() as usize + 1);
        Ok(Self {
            delay,
            cadence,
            depth,
            history: VecDeque::with_capacity(depth),
            latest: None,
        })
    }

    pub fn delay(&self) -> DelayClass {
        self.delay
    }

    pub fn latest(&self) -> Option<&TwinSnapshot> {
        self.latest.as_ref()
    }

    fn observe(&mut self, physical: &PhysicalState) {
        if self.history.back().map(|s| s.clock.t) == Some(physical.clock.t) {
            return;
        }
        if self.history.len() == self.depth {
            self.history.pop_front();
        }
        self.history.push_back(physical.clone());
    }

    /// Record `physical` and, on a cadence boundary, deliver the state
    /// captured `delay` slots before `now`.
    pub fn sync(&mut self, physical: &PhysicalState, now: u64) -> Result<TwinSnapshot> {
        if now < physical.clock.t {
            return Err(Error::Invalid(format!(
                "sync at slot {now} precedes physical clock {}",
                physical.clock.t
            )));
        }
        self.observe(physical);
        let due = now.is_multiple_of(self.cadence) || self.latest.is_none();
        if due {
            let lag = self.delay.slots();
            let oldest = self.history.front().expect("observed at least one state");
            let (state, underflow) = if now < lag || now - lag < oldest.clock.t {
                (oldest, true)
            } else {
                let state = self
                    .history
                    .iter()
                    .rev()
                    .find(|s| s.clock.t <= now - lag)
                    .expect("target is within history");
                (state, false)
            };
            self.latest = Some(TwinSnapshot {
                captured_at: state.clock.t,
                delivered_at: now,
                channel: state.channel.clone(),
                traffic: state.traffic.clone(),
                qos: state.qos,
                underflow,
            });
        }
        Ok(self.latest.clone().expect("set above"))
    }
}

/// Per-entry mean of the last `window` snapshots.
pub fn summarize(history: &[TwinSnapshot], window: usize) -> Result<TwinSnapshot> {
    if window == 0 {
        return Err(Error::Invalid(
            "summary window must be at least 1".to_string(),
        ));
    }
    let last = history.last().ok_or(Error::Empty("twin history"))?;
    let slice = &history[history.len().saturating_sub(window)..];
    let n = slice.len() as f64;

    let shape = last.channel.snr().raw_dim();
    let mut snr = ndarray::Array2::<f64>::zeros(shape);
    let mut queue = vec![0.0; last.traffic.urllc_queue.len()];
    let mut lambda = 0.0;
    for s in slice {
        if s.channel.snr().raw_dim() != shape || s.traffic.urllc_queue.len() != queue.len() {
            return Err(Error::Dimension {
                what: "summarized snapshot",
                expected: last.channel.snr().len(),
                actual: s.channel.snr().len(),
            });
        }
        snr += s.channel.snr();
        for (q, v) in queue.iter_mut().zip(&s.traffic.urllc_queue) {
            *q += v;
        }
        lambda += s.traffic.lambda;
    }
    snr /= n;
    queue.iter_mut().for_each(|q| *q /= n);

    Ok(TwinSnapshot {
        captured_at: last.captured_at,
        delivered_at: last.delivered_at,
        channel: ChannelState::new(snr)?,
        traffic: TrafficState {
            lambda: lambda / n,
            urllc_queue: queue,
        },
        qos: last.qos,
        underflow: slice.iter().any(|s| s.underflow),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTolerances {
    pub snr_mae: f64,
    pub queue_mae: f64,
}

impl Default for CalibrationTolerances {
    fn default() -> Self {
        Self {
            snr_mae: 1e-9,
            queue_mae: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReport {
    /// Mean absolute linear-SNR error over all (user, block) entries.
    pub snr_mae: f64,
    /// Mean absolute queue error over all users, bits.
    pub queue_mae: f64,
    pub passed: bool,
}

pub fn calibrate(
    twin: &TwinSnapshot,
    physical: &PhysicalState,
    tol: &CalibrationTolerances,
) -> Result<CalibrationReport> {
    let (a, b) = (twin.channel.snr(), physical.channel.snr());
    if a.raw_dim() != b.raw_dim() {
        return Err(Error::Dimension {
            what: "calibration channel",
            expected: b.len(),
            actual: a.len(),
        });
    }
    let (qa, qb) = (&twin.traffic.urllc_queue, &physical.traffic.urllc_queue);
    if qa.len() != qb.len() {
        return Err(Error::Dimension {
            what: "calibration traffic",
            expected: qb.len(),
            actual: qa.len(),
        });
    }
    let snr_mae = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64;
    let queue_mae =
        qa.iter().zip(qb).map(|(x, y)| (x - y).abs()).sum::<f64>() / qa.len().max(1) as f64;
    Ok(CalibrationReport {
        snr_mae,
        queue_mae,
        passed: snr_mae <= tol.snr_mae && queue_mae <= tol.queue_mae,
    })
}
