//! Experiment orchestration: the per-slot sync → decide → advance loop,
//! dataset collection for the allocator, training, and policy × λ sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::validate_allocation;
use crate::envsim::LambdaSchedule;
use crate::error::{Error, Result};
use crate::metrics::{export_csv, outage_event, spectral_efficiency, RunSummary, SlotMetrics};
use crate::nn::{self, encode_features, Allocator, Dataset, Mlp, TrainReport};
use crate::par;
use crate::policy::{oracle_allocate, Policy, PolicyKind};
use crate::scenario::Scenario;
use crate::twin::{calibrate, staleness, CalibrationReport, CalibrationTolerances};

/// Mix `index` into `base` (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Everything recorded during one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub slots: Vec<SlotMetrics>,
    /// Twin staleness at decision time, per slot.
    pub staleness: Vec<u64>,
    /// Slot at which the decision's snapshot was delivered, per slot.
    pub delivered_at: Vec<u64>,
    pub calibration: Vec<CalibrationReport>,
    pub repair_exhausted: usize,
}

/// Simulate `horizon` slots of `policy` against a fresh environment.
pub fn simulate(
    scenario: &Scenario,
    policy: &Policy,
    lambda: LambdaSchedule,
    seed: u64,
    horizon: u64,
) -> Result<RunTrace> {
    let env = scenario.environment(lambda);
    let ctx = scenario.context();
    let tol = CalibrationTolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.initial_state(&mut rng)?;
    let mut twin = scenario.twin()?;

    let n = horizon as usize;
    let mut trace = RunTrace {
        slots: Vec::with_capacity(n),
        staleness: Vec::with_capacity(n),
        delivered_at: Vec::with_capacity(n),
        calibration: Vec::with_capacity(n),
        repair_exhausted: 0,
    };
    for _ in 0..horizon {
        let now = state.clock.t;
        let snapshot = twin.sync(&state, now)?;
        trace.staleness.push(staleness(&snapshot, now));
        trace.delivered_at.push(snapshot.delivered_at());
        trace.calibration.push(calibrate(&snapshot, &state, &tol)?);

        let decision = policy.decide(&snapshot, &ctx)?;
        validate_allocation(&decision.allocation, &scenario.grid, &scenario.users)?;
        trace.repair_exhausted += usize::from(decision.repair_exhausted);

        let (next, out) = env.advance(&state, &decision.allocation, &mut rng);
        trace.slots.push(SlotMetrics {
            t: out.t,
            policy: policy.kind(),
            seed,
            lambda_t: out.lambda,
            sum_rate_embb: out.embb_rate,
            sum_rate_urllc: out.urllc_rate,
            spectral_efficiency: spectral_efficiency(
                &out.delivered,
                &scenario.grid,
                scenario.slot_duration(),
            )?,
            outage: outage_event(out.urllc_rate, state.qos.urllc_packet_bits, out.lambda),
        });
        state = next;
    }
    Ok(trace)
}

/// Twin snapshots labelled by the oracle. Each episode follows the oracle's
/// own decisions under the training λ schedule; episodes run in parallel and
/// are concatenated in order.
pub fn collect_dataset(
    scenario: &Scenario,
    slots: u64,
    episodes: usize,
    seed: u64,
) -> Result<Dataset> {
    let episodes = episodes.max(1);
    let per = slots.div_ceil(episodes as u64);
    let ctx = scenario.context();
    let oracle = scenario.oracle();
    let features = scenario.features();
    let qos = scenario.qos();

    let parts = par::map_range(
        episodes,
        |e| -> Result<(Vec<Vec<f64>>, Vec<Vec<Option<usize>>>)> {
            let env = scenario.environment(scenario.train_lambda());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + e as u64));
            let mut state = env.initial_state(&mut rng)?;
            let mut twin = scenario.twin()?;
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            let len = per.min(slots.saturating_sub(per * e as u64));
            for _ in 0..len {
                let snap = twin.sync(&state, state.clock.t)?;
                let d = oracle_allocate(&snap, &ctx, &oracle)?;
                xs.push(encode_features(&snap, &ctx, &qos, &features)?);
                ys.push(
                    d.allocation
                        .as_slice()
                        .iter()
                        .map(|a| a.map(|u| u.index()))
                        .collect(),
                );
                state = env.advance(&state, &d.allocation, &mut rng).0;
            }
            Ok((xs, ys))
        },
    );

    let dim = nn::input_dim(scenario.users.len(), scenario.grid.num_rbs());
    let (mut flat, mut labels) = (Vec::new(), Vec::new());
    for p in parts {
        let (xs, ys) = p?;
        xs.into_iter().for_each(|x| flat.extend(x));
        labels.extend(ys);
    }
    let features =
        Array2::from_shape_vec((labels.len(), dim), flat).expect("rows have input_dim entries");
    Dataset::new(features, labels)
}

/// Fresh, untrained allocator shaped for `scenario`.
pub fn init_allocator(scenario: &Scenario) -> Result<Allocator> {
    let sizes = nn::layer_sizes(
        scenario.users.len(),
        scenario.grid.num_rbs(),
        &scenario.file.nn.hidden,
    );
    Ok(Allocator {
        net: Mlp::glorot(&sizes, scenario.users.len(), scenario.seed())?,
        features: scenario.features(),
    })
}

pub fn train_allocator(scenario: &Scenario) -> Result<(Allocator, TrainReport)> {
    let nn_cfg = &scenario.file.nn;
    let data = collect_dataset(
        scenario,
        nn_cfg.train_slots,
        nn_cfg.train_episodes,
        scenario.seed(),
    )?;
    let mut allocator = init_allocator(scenario)?;
    let report = nn::train(&mut allocator.net, &data, &scenario.train_config())?;
    Ok((allocator, report))
}

pub fn loss_csv(report: &TrainReport) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        let _ = writeln!(s, "{i},{l:.9}");
    }
    s
}

/// Train and write `weights.bin` plus `loss.csv` into `out_dir`.
pub fn train_command(scenario: &Scenario, out_dir: &Path) -> Result<(Allocator, TrainReport)> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (allocator, report) = train_allocator(scenario)?;
    nn::io::save(&allocator, &out_dir.join("weights.bin"))?;
    let loss_path = out_dir.join("loss.csv");
    fs::write(&loss_path, loss_csv(&report)).map_err(|e| Error::io(&loss_path, e))?;
    Ok((allocator, report))
}

#[derive(Debug, Clone)]
pub enum WeightsSource {
    None,
    File(PathBuf),
    Train,
    Loaded(Arc<Allocator>),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub policies: Vec<PolicyKind>,
    /// Constant-λ sweep points; empty means "use the scenario's schedule once".
    pub lambdas: Vec<f64>,
    pub out_dir: PathBuf,
    pub weights: WeightsSource,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::Invalid(
                "experiment needs at least one policy".to_string(),
            ));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Invalid(
                "sweep values must be nonnegative".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summaries: Vec<RunSummary>,
    pub csv_paths: Vec<PathBuf>,
    pub comparison_path: PathBuf,
}

impl ExperimentResult {
    pub fn summary(&self, policy: PolicyKind, lambda: Option<f64>) -> Option<&RunSummary> {
        self.summaries
            .iter()
            .find(|s| s.policy == policy && s.lambda == lambda)
    }
}

pub fn build_policy(
    scenario: &Scenario,
    kind: PolicyKind,
    allocator: Option<&Arc<Allocator>>,
) -> Result<Policy> {
    Ok(match kind {
        PolicyKind::Orthogonal => Policy::Orthogonal(scenario.orthogonal()),
        PolicyKind::Oracle => Policy::Oracle(scenario.oracle()),
        PolicyKind::Dnn | PolicyKind::DnnRepair => {
            let allocator =
                allocator.ok_or_else(|| Error::MissingWeights(kind.id().to_string()))?;
            let expected = nn::layer_sizes(scenario.users.len(), scenario.grid.num_rbs(), &[]);
            let net = &allocator.net;
            if net.input_dim() != expected[0] || net.output_dim() != expected[1] {
                return Err(Error::Dimension {
                    what: "allocator shape",
                    expected: expected[0],
                    actual: net.input_dim(),
                });
            }
            Policy::Dnn {
                allocator: Arc::clone(allocator),
                repair: kind == PolicyKind::DnnRepair,
                oracle: scenario.oracle(),
            }
        }
    })
}

fn lambda_label(l: f64) -> String {
    format!("{l}").replace('.', "p")
}

pub fn comparison_csv(summaries: &[RunSummary]) -> String {
    let mut s = String::from(
        "policy_id,lambda,mean_spectral_efficiency,exceedance_mass,outage_probability\n",
    );
    for r in summaries {
        let lambda = r
            .lambda
            .map_or("schedule".to_string(), |l| format!("{l:.3}"));
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6}",
            r.policy.id(),
            lambda,
            r.mean_spectral_efficiency,
            r.exceedance(),
            r.outage_probability
        );
    }
    s
}

/// Run every (policy, λ) pair, write per-run CSVs and `comparison.csv`.
///
/// Runs at the same sweep point share a seed, so every policy sees the same
/// channel and arrival realizations.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let scenario = &spec.scenario;
    fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;

    let allocator = if spec.policies.iter().any(|p| p.needs_weights()) {
        Some(match &spec.weights {
            WeightsSource::None => {
                let p = spec.policies.iter().find(|p| p.needs_weights()).unwrap();
                return Err(Error::MissingWeights(p.id().to_string()));
            }
            WeightsSource::File(path) => Arc::new(nn::io::load(path)?),
            WeightsSource::Train => Arc::new(train_command(scenario, &spec.out_dir)?.0),
            WeightsSource::Loaded(a) => Arc::clone(a),
        })
    } else {
        None
    };

    let points: Vec<Option<f64>> = if spec.lambdas.is_empty() {
        vec![None]
    } else {
        spec.lambdas.iter().copied().map(Some).collect()
    };
    let policies = spec
        .policies
        .iter()
        .map(|k| build_policy(scenario, *k, allocator.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, Option<f64>, &Policy)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, l)| policies.iter().map(move |p| (i, *l, p)))
        .collect();

    let results = par::map(
        &jobs,
        |(i, lambda, policy)| -> Result<(RunSummary, PathBuf)> {
            let seed = derive_seed(scenario.seed(), *i as u64);
            let schedule = lambda.map_or(scenario.lambda, LambdaSchedule::Constant);
            let trace = simulate(scenario, policy, schedule, seed, scenario.horizon())?;
            let summary = RunSummary::from_slots(
                &trace.slots,
                scenario.window(),
                scenario.qos().urllc_outage_threshold,
                *lambda,
                scenario.hash().to_string(),
            )?;
            let stem = policy.kind().file_stem();
            let name = match lambda {
                Some(l) => format!("{stem}_lambda{}.csv", lambda_label(*l)),
                None => format!("{stem}.csv"),
            };
            let path = spec.out_dir.join(name);
            export_csv(&trace.slots, &summary, &path)?;
            Ok((summary, path))
        },
    );

    let mut summaries = Vec::with_capacity(results.len());
    let mut csv_paths = Vec::with_capacity(results.len());
    for r in results {
        let (s, p) = r?;
        summaries.push(s);
        csv_paths.push(p);
    }
    let comparison_path = spec.out_dir.join("comparison.csv");
    fs::write(&comparison_path, comparison_csv(&summaries))
        .map_err(|e| Error::io(&comparison_path, e))?;
    Ok(ExperimentResult {
        summaries,
        csv_paths,
        comparison_path,
    })
}
