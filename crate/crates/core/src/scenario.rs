//! Scenario files.
//!
//! A scenario is a TOML document. Every key is optional; omitted keys take
//! the desk-scale defaults below. Unknown keys and duplicate keys are
//! rejected.
//!
//! ```toml
//! seed = 1
//! horizon = 5000          # slots per run
//! slot_duration = 0.001   # seconds
//!
//! [users]
//! embb = 10
//! urllc = 10
//!
//! [grid]
//! num_rbs = 50
//! rb_bandwidth = 1e6      # Hz per resource block
//!
//! [link]
//! embb_mean_snr_db = 2.0
//! urllc_mean_snr_db = 4.0
//! snr_spread_db = 5.0     # per-class means spread linearly over ±spread
//! fading = "rician"       # or "rayleigh"
//! rician_k = 10.0         # used when fading = "rician"; "inf" disables fading
//!
//! [traffic]
//! schedule = "constant"   # or "uniform"
//! lambda = 100.0          # packets/slot, constant schedule
//! lambda_low = 100.0      # uniform schedule bounds
//! lambda_high = 200.0
//! sweep = [100.0, 125.0, 150.0, 175.0, 200.0]
//!
//! [qos]
//! embb_min_rate = 0.0     # bits/s
//! urllc_packet_bits = 256.0
//! urllc_outage_threshold = 0.07
//!
//! [twin]
//! delay = "minimal"       # minimal | moderate | significant
//! moderate_slots = 2
//! significant_slots = 50
//! cadence = 1             # slots between syncs
//! history_depth = 64
//!
//! [policy]
//! urllc_fraction = 0.5
//! urllc_priority = 2.0
//! exhaustive_cap = 4096
//! # penalty_weight = 1e5  # default: 10x the largest per-block rate
//!
//! [metrics]
//! window = 100
//!
//! [nn]
//! hidden = [600, 300, 250]
//! optimizer = "sgd"       # sgd | adam
//! learning_rate = 0.001
//! epochs = 3
//! batch_size = 32
//! train_slots = 20000
//! train_episodes = 8
//! train_lambda_low = 100.0
//! train_lambda_high = 200.0
//! ref_snr_db = 2.0
//! ref_lambda = 150.0
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{QosRequirement, ResourceGrid, ServiceClass, UserSet};
use crate::envsim::{db_to_linear, Environment, Fading, LambdaSchedule, LinkBudget};
use crate::error::{Error, Result};
use crate::nn::{FeatureConfig, TrainConfig};
use crate::policy::{OracleConfig, OracleMode, OrthogonalConfig, SchedulingContext};
use crate::twin::{DelayClass, DelayTable, DigitalTwin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub seed: u64,
    pub horizon: u64,
    pub slot_duration: f64,
    pub users: UsersSection,
    pub grid: GridSection,
    pub link: LinkSection,
    pub traffic: TrafficSection,
    pub qos: QosRequirement,
    pub twin: TwinSection,
    pub policy: PolicySection,
    pub metrics: MetricsSection,
    pub nn: NnSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            seed: 1,
            horizon: 5000,
            slot_duration: 1e-3,
            users: UsersSection::default(),
            grid: GridSection::default(),
            link: LinkSection::default(),
            traffic: TrafficSection::default(),
            qos: QosRequirement::default(),
            twin: TwinSection::default(),
            policy: PolicySection::default(),
            metrics: MetricsSection::default(),
            nn: NnSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsersSection {
    pub embb: usize,
    pub urllc: usize,
}

impl Default for UsersSection {
    fn default() -> Self {
        Self {
            embb: 10,
            urllc: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub num_rbs: usize,
    pub rb_bandwidth: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            num_rbs: 50,
            rb_bandwidth: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub embb_mean_snr_db: f64,
    pub urllc_mean_snr_db: f64,
    pub snr_spread_db: f64,
    pub fading: String,
    pub rician_k: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            embb_mean_snr_db: 2.0,
            urllc_mean_snr_db: 4.0,
            snr_spread_db: 5.0,
            fading: "rician".to_string(),
            rician_k: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub schedule: String,
    pub lambda: f64,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub sweep: Vec<f64>,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self {
            schedule: "constant".to_string(),
            lambda: 100.0,
            lambda_low: 100.0,
            lambda_high: 200.0,
            sweep: vec![100.0, 125.0, 150.0, 175.0, 200.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinSection {
    pub delay: String,
    pub moderate_slots: u64,
    pub significant_slots: u64,
    pub cadence: u64,
    pub history_depth: usize,
}

impl Default for TwinSection {
    fn default() -> Self {
        let t = DelayTable::default();
        Self {
            delay: "minimal".to_string(),
            moderate_slots: t.moderate,
            significant_slots: t.significant,
            cadence: 1,
            history_depth: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub urllc_fraction: f64,
    pub urllc_priority: f64,
    pub exhaustive_cap: u64,
    pub penalty_weight: Option<f64>,
}

impl Default for PolicySection {
    fn default() -> Self {
        let o = OracleConfig::default();
        Self {
            urllc_fraction: 0.5,
            urllc_priority: o.urllc_priority,
            exhaustive_cap: o.exhaustive_cap,
            penalty_weight: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub window: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { window: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnSection {
    pub hidden: Vec<usize>,
    pub optimizer: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_slots: u64,
    pub train_episodes: usize,
    pub train_lambda_low: f64,
    pub train_lambda_high: f64,
    pub ref_snr_db: f64,
    pub ref_lambda: f64,
}

impl Default for NnSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden: crate::nn::DEFAULT_HIDDEN.to_vec(),
            optimizer: "sgd".to_string(),
            learning_rate: t.learning_rate,
            epochs: 3,
            batch_size: t.batch_size,
            train_slots: 20000,
            train_episodes: 8,
            train_lambda_low: 100.0,
            train_lambda_high: 200.0,
            ref_snr_db: 2.0,
            ref_lambda: 150.0,
        }
    }
}

/// A validated scenario with its typed building blocks.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub users: UserSet,
    pub grid: ResourceGrid,
    pub lambda: LambdaSchedule,
    pub delay: DelayClass,
    hash: String,
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        Self::build(file).map_err(|e| {
            if e.is_config() {
                e
            } else {
                Error::Invalid(e.to_string())
            }
        })
    }

    fn build(file: ScenarioFile) -> Result<Self> {
        let f = &file;
        if !(f.slot_duration > 0.0 && f.slot_duration.is_finite()) {
            return Err(Error::Invalid("slot_duration must be positive".to_string()));
        }
        if f.horizon == 0 {
            return Err(Error::Invalid(
                "horizon must be at least 1 slot".to_string(),
            ));
        }
        let grid = ResourceGrid::new(f.grid.num_rbs, f.grid.rb_bandwidth)?;
        f.qos.validate()?;

        let fading = match f.link.fading.as_str() {
            "rayleigh" => Fading::Rayleigh,
            "rician" if f.link.rician_k >= 0.0 => Fading::Rician {
                k_factor: f.link.rician_k,
            },
            "rician" => return Err(Error::Invalid("rician_k must be nonnegative".to_string())),
            other => return Err(Error::Invalid(format!("unknown fading model `{other}`"))),
        };
        for v in [
            f.link.embb_mean_snr_db,
            f.link.urllc_mean_snr_db,
            f.link.snr_spread_db,
        ] {
            if !v.is_finite() {
                return Err(Error::Invalid(
                    "link budget values must be finite".to_string(),
                ));
            }
        }
        let spread = f.link.snr_spread_db;
        let (ne, nu) = (f.users.embb, f.users.urllc);
        let users = UserSet::from_counts(ne, nu, |class, k| {
            let (mean, n) = match class {
                ServiceClass::Embb => (f.link.embb_mean_snr_db, ne),
                ServiceClass::Urllc => (f.link.urllc_mean_snr_db, nu),
            };
            let offset = if n > 1 {
                -spread + 2.0 * spread * k as f64 / (n - 1) as f64
            } else {
                0.0
            };
            LinkBudget::new(mean + offset, fading)
        })?;

        let lambda = match f.traffic.schedule.as_str() {
            "constant" => LambdaSchedule::Constant(f.traffic.lambda),
            "uniform" => LambdaSchedule::Uniform {
                low: f.traffic.lambda_low,
                high: f.traffic.lambda_high,
            },
            other => return Err(Error::Invalid(format!("unknown lambda schedule `{other}`"))),
        };
        lambda.validate()?;
        if f.traffic
            .sweep
            .iter()
            .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::Invalid(
                "sweep values must be nonnegative".to_string(),
            ));
        }

        let table = DelayTable {
            moderate: f.twin.moderate_slots,
            significant: f.twin.significant_slots,
        };
        table.validate()?;
        let delay = table.class(&f.twin.delay)?;
        if f.twin.cadence == 0 {
            return Err(Error::Invalid(
                "twin cadence must be at least 1".to_string(),
            ));
        }

        if !(0.0..=1.0).contains(&f.policy.urllc_fraction) {
            return Err(Error::Invalid(
                "urllc_fraction out of range [0, 1]".to_string(),
            ));
        }
        if !(f.policy.urllc_priority >= 0.0 && f.policy.urllc_priority.is_finite()) {
            return Err(Error::Invalid(
                "urllc_priority must be nonnegative".to_string(),
            ));
        }
        if f.policy
            .penalty_weight
            .is_some_and(|p| !(p >= 0.0 && p.is_finite()))
        {
            return Err(Error::Invalid(
                "penalty_weight must be nonnegative".to_string(),
            ));
        }
        if f.metrics.window == 0 {
            return Err(Error::Invalid(
                "metrics window must be at least 1".to_string(),
            ));
        }
        if f.nn.hidden.contains(&0) {
            return Err(Error::Invalid(
                "hidden layer widths must be positive".to_string(),
            ));
        }
        if !(f.nn.ref_lambda > 0.0 && f.nn.ref_snr_db.is_finite()) {
            return Err(Error::Invalid(
                "nn reference scales must be positive".to_string(),
            ));
        }
        if f.nn.train_episodes == 0 || f.nn.train_slots == 0 {
            return Err(Error::Invalid(
                "train_slots and train_episodes must be at least 1".to_string(),
            ));
        }
        LambdaSchedule::Uniform {
            low: f.nn.train_lambda_low,
            high: f.nn.train_lambda_high,
        }
        .validate()?;
        train_config_of(&file)?.validate()?;

        let canonical = toml::to_string(&file).map_err(|e| Error::Invalid(e.to_string()))?;
        let digest = Sha256::digest(canonical.as_bytes());
        let hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();

        Ok(Self {
            file,
            users,
            grid,
            lambda,
            delay,
            hash,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        Self::from_file(file)
    }

    pub fn desk_default() -> Self {
        Self::from_file(ScenarioFile::default()).expect("defaults are valid")
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn horizon(&self) -> u64 {
        self.file.horizon
    }

    pub fn slot_duration(&self) -> f64 {
        self.file.slot_duration
    }

    pub fn qos(&self) -> QosRequirement {
        self.file.qos
    }

    pub fn window(&self) -> usize {
        self.file.metrics.window
    }

    pub fn sweep(&self) -> &[f64] {
        &self.file.traffic.sweep
    }

    /// Short hex digest of the canonical scenario.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn context(&self) -> SchedulingContext<'_> {
        SchedulingContext {
            grid: &self.grid,
            users: &self.users,
            slot_duration: self.file.slot_duration,
        }
    }

    pub fn environment(&self, lambda: LambdaSchedule) -> Environment {
        Environment {
            users: self.users.clone(),
            grid: self.grid,
            qos: self.file.qos,
            slot_duration: self.file.slot_duration,
            lambda,
        }
    }

    pub fn twin(&self) -> Result<DigitalTwin> {
        DigitalTwin::new(
            self.delay,
            self.file.twin.cadence,
            self.file.twin.history_depth,
        )
    }

    pub fn orthogonal(&self) -> OrthogonalConfig {
        OrthogonalConfig {
            urllc_fraction: self.file.policy.urllc_fraction,
        }
    }

    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            mode: OracleMode::Auto,
            exhaustive_cap: self.file.policy.exhaustive_cap,
            penalty_weight: self.file.policy.penalty_weight,
            urllc_priority: self.file.policy.urllc_priority,
        }
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            ref_snr: db_to_linear(self.file.nn.ref_snr_db),
            ref_lambda: self.file.nn.ref_lambda,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        train_config_of(&self.file).expect("validated on load")
    }

    pub fn train_lambda(&self) -> LambdaSchedule {
        LambdaSchedule::Uniform {
            low: self.file.nn.train_lambda_low,
            high: self.file.nn.train_lambda_high,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn train_config_of(f: &ScenarioFile) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: f.nn.learning_rate,
        epochs: f.nn.epochs,
        batch_size: f.nn.batch_size,
        seed: f.seed,
        optimizer: f.nn.optimizer.parse()?,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gets_defaults() {
        let s = Scenario::parse("").unwrap();
        assert_eq!(s.file.policy.urllc_fraction, 0.5);
        assert_eq!(s.delay, DelayClass::Minimal);
        assert_eq!(s.window(), 100);
        assert_eq!(s.users.len(), 20);
        assert_eq!(s.grid.system_bandwidth(), 50.0 * 1e6);
    }

    #[test]
    fn epsilon_out_of_range() {
        let err = Scenario::parse("[qos]\nurllc_outage_threshold = 1.5\n").unwrap_err();
        assert!(err.is_config());
        assert!(
            err.to_string()
                .contains("urllc_outage_threshold out of range"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_key_is_parse_error() {
        let err = Scenario::parse("seed = 1\nseed = 2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            Scenario::parse("[grid]\nbogus = 3\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn spread_is_symmetric() {
        let s = Scenario::parse(
            "[users]\nembb = 3\nurllc = 1\n[link]\nsnr_spread_db = 2.0\nembb_mean_snr_db = 5.0\n",
        )
        .unwrap();
        let snrs: Vec<f64> = s.users.iter().map(|u| u.link.mean_snr_db).collect();
        assert_eq!(snrs, vec![3.0, 5.0, 7.0, 4.0]);
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::parse("seed = 1").unwrap();
        let b = Scenario::parse("seed = 2").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Scenario::parse("seed = 1\n").unwrap().hash());
    }

    #[test]
    fn delay_section() {
        let s =
            Scenario::parse("[twin]\ndelay = \"significant\"\nsignificant_slots = 9\n").unwrap();
        assert_eq!(s.delay, DelayClass::Significant(9));
        assert!(Scenario::parse("[twin]\nmoderate_slots = 10\nsignificant_slots = 9\n").is_err());
    }
}
