//! Spectral efficiency, URLLC outage statistics and CSV export.
//!
//! An outage happens in slot `t` when `R_u(t) <= ζ·λ(t)`. Outage
//! probability is estimated per non-overlapping window of `W` slots; the CDF
//! is taken over those per-window estimates.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::domain::ResourceGrid;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;

pub const CSV_HEADER: &str =
    "t,policy_id,seed,lambda_t,sum_rate_embb,sum_rate_urllc,spectral_efficiency,outage";

#[derive(Debug, Clone, PartialEq)]
pub struct SlotMetrics {
    pub t: u64,
    pub policy: PolicyKind,
    pub seed: u64,
    pub lambda_t: f64,
    /// bits/slot
    pub sum_rate_embb: f64,
    /// R_u(t), bits/slot
    pub sum_rate_urllc: f64,
    /// Delivered bits/s/Hz.
    pub spectral_efficiency: f64,
    pub outage: bool,
}

impl SlotMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.6},{}",
            self.t,
            self.policy.id(),
            self.seed,
            self.lambda_t,
            self.sum_rate_embb,
            self.sum_rate_urllc,
            self.spectral_efficiency,
            u8::from(self.outage)
        )
    }
}

/// `(Σ bits / slot_duration) / system_bandwidth`.
pub fn spectral_efficiency(bits: &[f64], grid: &ResourceGrid, slot_duration: f64) -> Result<f64> {
    let bw = grid.system_bandwidth();
    if bw <= 0.0 {
        return Err(Error::ZeroBandwidth);
    }
    Ok(bits.iter().sum::<f64>() / slot_duration / bw)
}

pub fn outage_event(urllc_rate: f64, packet_bits: f64, lambda: f64) -> bool {
    urllc_rate <= packet_bits * lambda
}

/// Outage rate of each complete window. A run shorter than one window
/// yields a single partial window.
pub fn window_outage_rates(outages: &[bool], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let rate = |w: &[bool]| w.iter().filter(|o| **o).count() as f64 / w.len() as f64;
    if outages.len() < window {
        return if outages.is_empty() {
            vec![]
        } else {
            vec![rate(outages)]
        };
    }
    outages.chunks_exact(window).map(rate).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageCdf {
    /// `(x, P[window outage rate <= x])` at each distinct observed value.
    pub points: Vec<(f64, f64)>,
    /// Fraction of windows whose outage rate exceeds ε_max.
    pub exceedance: f64,
}

pub fn outage_cdf(window_rates: &[f64], eps_max: f64) -> Result<OutageCdf> {
    if window_rates.is_empty() {
        return Err(Error::Empty("outage windows"));
    }
    if window_rates.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Invalid(
            "window outage rates must lie in [0, 1]".to_string(),
        ));
    }
    let mut sorted = window_rates.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, x) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => points.push((*x, f)),
        }
    }
    let exceedance = sorted.iter().filter(|p| **p > eps_max).count() as f64 / n;
    Ok(OutageCdf { points, exceedance })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub seed: u64,
    /// Sweep value the run was configured with, if any.
    pub lambda: Option<f64>,
    pub scenario_hash: String,
    pub slots: usize,
    pub window: usize,
    pub eps_max: f64,
    pub mean_spectral_efficiency: f64,
    pub outage_probability: f64,
    pub cdf: OutageCdf,
}

impl RunSummary {
    pub fn from_slots(
        slots: &[SlotMetrics],
        window: usize,
        eps_max: f64,
        lambda: Option<f64>,
        scenario_hash: String,
    ) -> Result<Self> {
        let first = slots.first().ok_or(Error::Empty("slot metrics"))?;
        let n = slots.len() as f64;
        let outages: Vec<bool> = slots.iter().map(|s| s.outage).collect();
        let cdf = outage_cdf(&window_outage_rates(&outages, window), eps_max)?;
        Ok(Self {
            policy: first.policy,
            seed: first.seed,
            lambda,
            scenario_hash,
            slots: slots.len(),
            window,
            eps_max,
            mean_spectral_efficiency: slots.iter().map(|s| s.spectral_efficiency).sum::<f64>() / n,
            outage_probability: outages.iter().filter(|o| **o).count() as f64 / n,
            cdf,
        })
    }

    pub fn exceedance(&self) -> f64 {
        self.cdf.exceedance
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let lambda = self
            .lambda
            .map_or("schedule".to_string(), |l| format!("{l:.3}"));
        let _ = writeln!(s, "policy_id={}", self.policy.id());
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "lambda={lambda}");
        let _ = writeln!(s, "scenario_hash={}", self.scenario_hash);
        let _ = writeln!(s, "slots={}", self.slots);
        let _ = writeln!(s, "window={}", self.window);
        let _ = writeln!(s, "epsilon_max={:.6}", self.eps_max);
        let _ = writeln!(
            s,
            "mean_spectral_efficiency={:.6}",
            self.mean_spectral_efficiency
        );
        let _ = writeln!(s, "outage_probability={:.6}", self.outage_probability);
        let _ = writeln!(s, "exceedance_mass={:.6}", self.cdf.exceedance);
        s
    }

    pub fn cdf_csv(&self) -> String {
        let mut s = String::from("window_outage_rate,cumulative_probability\n");
        for (x, f) in &self.cdf.points {
            let _ = writeln!(s, "{x:.6},{f:.6}");
        }
        s
    }
}

/// `<stem>.summary` and `<stem>.cdf.csv` next to the CSV.
pub fn companion_paths(csv_path: &Path) -> (PathBuf, PathBuf) {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    (
        csv_path.with_file_name(format!("{stem}.summary")),
        csv_path.with_file_name(format!("{stem}.cdf.csv")),
    )
}

pub fn slots_csv(slots: &[SlotMetrics]) -> String {
    let mut s = String::with_capacity(64 * (slots.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for m in slots {
        s.push_str(&m.csv_row());
        s.push('\n');
    }
    s
}

/// Write per-slot rows to `path`, plus the summary and CDF companions.
pub fn export_csv(slots: &[SlotMetrics], summary: &RunSummary, path: &Path) -> Result<()> {
    let write = |p: &Path, body: String| fs::write(p, body).map_err(|e| Error::io(p, e));
    write(path, slots_csv(slots))?;
    let (summary_path, cdf_path) = companion_paths(path);
    write(&summary_path, summary.to_key_values())?;
    write(&cdf_path, summary.cdf_csv())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(t: u64, se: f64, outage: bool) -> SlotMetrics {
        SlotMetrics {
            t,
            policy: PolicyKind::Orthogonal,
            seed: 1,
            lambda_t: 100.0,
            sum_rate_embb: 1.0,
            sum_rate_urllc: 2.0,
            spectral_efficiency: se,
            outage,
        }
    }

    #[test]
    fn se_unit_check() {
        // 2.2e6 bits over 1 s on 1 MHz is 2.2 bits/s/Hz
        let grid = ResourceGrid::new(10, 1e5).unwrap();
        let se = spectral_efficiency(&[1.2e6, 1.0e6], &grid, 1.0).unwrap();
        assert!((se - 2.2).abs() < 1e-12);
        assert_eq!(spectral_efficiency(&[0.0, 0.0], &grid, 1.0).unwrap(), 0.0);
        let double = spectral_efficiency(&[2.4e6, 2.0e6], &grid, 1.0).unwrap();
        assert!((double - 2.0 * se).abs() < 1e-12);
    }

    #[test]
    fn outage_boundary_is_inclusive() {
        assert!(outage_event(25_600.0, 256.0, 100.0));
        assert!(!outage_event(25_601.0, 256.0, 100.0));
        assert!(outage_event(0.0, 256.0, 0.0));
        assert!(!outage_event(1.0, 256.0, 0.0));
    }

    #[test]
    fn cdf_counting() {
        let c = outage_cdf(&[0.0; 5], 0.07).unwrap();
        assert_eq!(c.points, vec![(0.0, 1.0)]);
        assert_eq!(c.exceedance, 0.0);
        let c = outage_cdf(&[0.0, 0.1], 0.07).unwrap();
        assert_eq!(c.exceedance, 0.5);
        assert_eq!(c.points, vec![(0.0, 0.5), (0.1, 1.0)]);
        assert!(outage_cdf(&[], 0.07).is_err());
    }

    #[test]
    fn windows() {
        let o = [true, false, false, false, true, true, false];
        assert_eq!(window_outage_rates(&o, 2), vec![0.5, 0.0, 1.0]);
        assert_eq!(window_outage_rates(&o[..1], 100), vec![1.0]);
    }

    #[test]
    fn csv_shape_and_summary() {
        let slots = vec![slot(0, 1.0, false), slot(1, 2.0, true), slot(2, 3.0, false)];
        let sum = RunSummary::from_slots(&slots, 100, 0.07, Some(100.0), "abc".into()).unwrap();
        assert!((sum.mean_spectral_efficiency - 2.0).abs() < 1e-12);
        let csv = slots_csv(&slots);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        let cols = lines[0].split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == cols));
        assert_eq!(lines[2], "1,orthogonal,1,100.000,1.000,2.000,2.000000,1");

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.csv");
        export_csv(&slots, &sum, &p).unwrap();
        let (s, c) = companion_paths(&p);
        assert!(fs::read_to_string(s)
            .unwrap()
            .contains("exceedance_mass=1.000000"));
        assert!(c.exists());
    }
}
