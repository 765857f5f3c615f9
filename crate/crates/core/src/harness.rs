//! Experiment orchestration: config loading, preset tables, seeded
//! multi-trial runs with shared outcome streams, regret aggregation, and
//! CSV/JSON emission.
//!
//! Determinism contract: (config, seed) fully determines every output byte.
//! Each trial owns three independent ChaCha streams derived from
//! (master seed, trial index) with a splitmix64 mixer: expert outcomes,
//! tie-breaks, and algorithm-internal randomness. Outcomes for *all* experts
//! are drawn every round whether or not they are played, so algorithms
//! compared on the same seed consume identical outcome streams.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    see_round, targeted_see_round, wmv_round, zooming_candidates, CucbState, Play, RegretTrace,
    SeeState, TargetedSeeState, WmvState, ZoomingState,
};
use crate::error::{Error, Result};
use crate::estimate::{DeltaMode, EstimatorTable, ExpertId};
use crate::experts::{
    realized_majority_score, realized_weighted_score, sample_outcomes, Domain, ExpertSpec,
    TaskContext,
};
use crate::mip::solve_optimal_weights;
use crate::votemath::{oec_prefix, p_maj_egalitarian_dp, p_maj_weighted};

/// Which learner drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    See,
    Wmv,
    Cucb,
    Zooming,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::See => "see",
            Algorithm::Wmv => "wmv",
            Algorithm::Cucb => "cucb",
            Algorithm::Zooming => "zooming",
        };
        f.write_str(s)
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub algo: Algorithm,
    pub experts: Vec<ExpertSpec>,
    pub horizon: u64,
    pub trials: u64,
    pub seed: u64,
    /// Defaults to N/2.
    pub quota: Option<f64>,
    pub delta_mode: DeltaSchedule,
    pub targeted_m: Option<usize>,
    /// Burn-in window per group for targeted-m runs.
    pub burn_in_t0: Option<u64>,
    pub resolve_period: u64,
    pub domain: String,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaSchedule {
    /// delta = 1/T.
    Fixed,
    /// delta_t = 1/t^2 per expert.
    Anytime,
}

impl ExperimentConfig {
    fn delta_mode(&self) -> DeltaMode {
        match self.delta_mode {
            DeltaSchedule::Fixed => DeltaMode::FixedHorizon {
                horizon: self.horizon,
            },
            DeltaSchedule::Anytime => DeltaMode::Anytime,
        }
    }

    pub fn quota_value(&self) -> f64 {
        self.quota
            .unwrap_or_else(|| self.experts.len() as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::SchemaViolation("horizon must be >= 1".into()));
        }
        if self.trials < 1 {
            return Err(Error::SchemaViolation("trials must be >= 1".into()));
        }
        if self.experts.is_empty() {
            return Err(Error::SchemaViolation("experts must be nonempty".into()));
        }
        for (i, e) in self.experts.iter().enumerate() {
            if let ExpertSpec::Bernoulli { p } = e {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::SchemaViolation(format!(
                        "experts[{i}]: competency {p} outside [0,1]"
                    )));
                }
            }
        }
        if let Some(q) = self.quota {
            if q <= 0.0 {
                return Err(Error::SchemaViolation("quota must be positive".into()));
            }
        }
        if self.targeted_m == Some(0) {
            return Err(Error::SchemaViolation("targeted_m must be >= 1".into()));
        }
        if self.targeted_m.is_some() && self.algo != Algorithm::See {
            return Err(Error::SchemaViolation(
                "targeted_m is only supported with algo \"see\"".into(),
            ));
        }
        if self.resolve_period < 1 {
            return Err(Error::SchemaViolation("resolve_period must be >= 1".into()));
        }
        Ok(())
    }
}

/// On-disk config: either a preset name with overrides or a full description.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub algo: Option<Algorithm>,
    /// Shorthand: a list of Bernoulli competencies.
    pub competencies: Option<Vec<f64>>,
    /// Shorthand: newline-delimited 0/1 replay files, one per expert.
    pub trace_files: Option<Vec<PathBuf>>,
    pub experts: Option<Vec<ExpertSpec>>,
    pub horizon: Option<u64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub quota: Option<f64>,
    pub delta_mode: Option<DeltaSchedule>,
    pub targeted_m: Option<usize>,
    pub burn_in_t0: Option<u64>,
    pub resolve_period: Option<u64>,
    pub domain: Option<String>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ConfigFile {
    /// Resolves preset + overrides into a validated config.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let expert_sources = [
            self.competencies.is_some(),
            self.trace_files.is_some(),
            self.experts.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if expert_sources > 1 {
            return Err(Error::SchemaViolation(
                "give exactly one of competencies, trace_files, or experts".into(),
            ));
        }
        let mut cfg = match &self.preset {
            Some(name) => preset(name)?,
            None => {
                let algo = self.algo.ok_or_else(|| {
                    Error::SchemaViolation("algo is required without a preset".into())
                })?;
                let experts = expert_list(&self)?.ok_or_else(|| {
                    Error::SchemaViolation(
                        "competencies or experts are required without a preset".into(),
                    )
                })?;
                let horizon = self.horizon.ok_or_else(|| {
                    Error::SchemaViolation("horizon is required without a preset".into())
                })?;
                let n = experts.len();
                ExperimentConfig {
                    name: self.name.clone().unwrap_or_else(|| "custom".into()),
                    algo,
                    experts,
                    horizon,
                    trials: 100,
                    seed: 7,
                    quota: None,
                    delta_mode: DeltaSchedule::Fixed,
                    targeted_m: None,
                    burn_in_t0: None,
                    resolve_period: default_resolve_period(n),
                    domain: "bernoulli".into(),
                    workers: None,
                    output_dir: None,
                }
            }
        };
        if self.preset.is_some() {
            if let Some(experts) = expert_list(&self)? {
                cfg.resolve_period = default_resolve_period(experts.len());
                cfg.experts = experts;
            }
            if let Some(a) = self.algo {
                cfg.algo = a;
            }
            if let Some(h) = self.horizon {
                cfg.horizon = h;
            }
        }
        if let Some(name) = self.name {
            cfg.name = name;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(q) = self.quota {
            cfg.quota = Some(q);
        }
        if let Some(d) = self.delta_mode {
            cfg.delta_mode = d;
        }
        if let Some(m) = self.targeted_m {
            cfg.targeted_m = Some(m);
        }
        if let Some(t0) = self.burn_in_t0 {
            cfg.burn_in_t0 = Some(t0);
        }
        if let Some(r) = self.resolve_period {
            cfg.resolve_period = r;
        }
        if let Some(d) = self.domain {
            cfg.domain = d;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(o) = self.output_dir {
            cfg.output_dir = Some(o);
        }
        for e in &mut cfg.experts {
            if let ExpertSpec::Remote { endpoint } = e {
                if endpoint.url.is_empty() {
                    endpoint.url = std::env::var("REMOTE_EXPERT_URL").map_err(|_| {
                        Error::SchemaViolation(
                            "remote expert without url and REMOTE_EXPERT_URL unset".into(),
                        )
                    })?;
                }
                if endpoint.bearer_token.is_none() {
                    endpoint.bearer_token = std::env::var("REMOTE_EXPERT_TOKEN").ok();
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn expert_list(file: &ConfigFile) -> Result<Option<Vec<ExpertSpec>>> {
    if let Some(ps) = &file.competencies {
        return Ok(Some(ps.iter().map(|&p| ExpertSpec::bernoulli(p)).collect()));
    }
    if let Some(paths) = &file.trace_files {
        let specs = paths
            .iter()
            .map(|p| ExpertSpec::trace_from_file(p))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Some(specs));
    }
    Ok(file.experts.clone())
}

/// Validated config from a JSON file; unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let file: ConfigFile =
        serde_json::from_str(&text).map_err(|e| Error::SchemaViolation(e.to_string()))?;
    file.resolve()
}

fn default_resolve_period(n: usize) -> u64 {
    if n <= 5 {
        1
    } else {
        10
    }
}

// Replayed per-domain model accuracies, in the benchmark's model order:
// aya, openorca, samantha, notus, qwen, mistral, gemma, deepseek, phi4.
const GSM8K_ACC: [f64; 9] = [
    0.0771, 0.1290, 0.1569, 0.2553, 0.3125, 0.4388, 0.4707, 0.7952, 0.9269,
];
const CQA_ACC: [f64; 9] = [
    0.0920, 0.1280, 0.1850, 0.2290, 0.3266, 0.4320, 0.6268, 0.7383, 0.7890,
];
const BOOLQ_ACC: [f64; 9] = [
    0.4300, 0.1040, 0.1130, 0.0391, 0.4898, 0.6531, 0.5510, 0.7143, 0.7163,
];

const AYA: usize = 0;
const OPENORCA: usize = 1;
const SAMANTHA: usize = 2;
const NOTUS: usize = 3;
const QWEN: usize = 4;
const MISTRAL: usize = 5;
const GEMMA: usize = 6;
const DEEPSEEK: usize = 7;
const PHI4: usize = 8;

fn pick(table: &[f64; 9], models: &[usize]) -> Vec<f64> {
    models.iter().map(|&m| table[m]).collect()
}

/// Bernoulli experiment vectors.
const SE1_P: [f64; 5] = [0.1, 0.65, 0.77, 0.79, 0.8];
const SE2_P: [f64; 15] = [
    0.12, 0.23, 0.31, 0.37, 0.42, 0.49, 0.55, 0.63, 0.68, 0.72, 0.76, 0.81, 0.87, 0.92, 0.98,
];
const SE3_P: [f64; 20] = [
    0.04, 0.07, 0.09, 0.12, 0.15, 0.19, 0.22, 0.26, 0.30, 0.33, 0.70, 0.73, 0.76, 0.78, 0.81, 0.84,
    0.86, 0.89, 0.90, 0.91,
];
const WV1_P: [f64; 3] = [0.332, 0.775, 0.881];
const WV2_P: [f64; 6] = [0.388, 0.561, 0.782, 0.799, 0.803, 0.841];
const WV3_P: [f64; 9] = [
    0.261, 0.370, 0.382, 0.499, 0.503, 0.511, 0.542, 0.616, 0.634,
];
const WS4_P: [f64; 3] = [0.763, 0.786, 0.8492];
const WS5_P: [f64; 5] = [0.435, 0.501, 0.667, 0.714, 0.792];
const WS6_P: [f64; 9] = [
    0.121, 0.232, 0.319, 0.374, 0.428, 0.498, 0.552, 0.637, 0.681,
];

/// Expands a named preset into its full configuration.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let build = |name: &str,
                 algo: Algorithm,
                 p: Vec<f64>,
                 horizon: u64,
                 domain: &str|
     -> ExperimentConfig {
        let n = p.len();
        ExperimentConfig {
            name: name.to_string(),
            algo,
            experts: p.into_iter().map(ExpertSpec::bernoulli).collect(),
            horizon,
            trials: 100,
            seed: 7,
            quota: None,
            delta_mode: DeltaSchedule::Fixed,
            targeted_m: None,
            burn_in_t0: None,
            resolve_period: default_resolve_period(n),
            domain: domain.to_string(),
            workers: None,
            output_dir: None,
        }
    };
    use Algorithm::*;
    let cfg = match name.to_ascii_uppercase().as_str() {
        "SE1" => build("SE1", See, SE1_P.to_vec(), 10_000, "bernoulli"),
        "SE2" => build("SE2", See, SE2_P.to_vec(), 10_000, "bernoulli"),
        "SE3" => build("SE3", See, SE3_P.to_vec(), 10_000, "bernoulli"),
        "SC1" => build("SC1", Cucb, SE1_P.to_vec(), 10_000, "bernoulli"),
        "SC2" => build("SC2", Cucb, SE2_P.to_vec(), 10_000, "bernoulli"),
        "SC3" => build("SC3", Cucb, SE3_P.to_vec(), 10_000, "bernoulli"),
        "WV1" => build("WV1", Wmv, WV1_P.to_vec(), 2_000, "bernoulli"),
        "WV2" => build("WV2", Wmv, WV2_P.to_vec(), 2_000, "bernoulli"),
        "WV3" => build("WV3", Wmv, WV3_P.to_vec(), 2_000, "bernoulli"),
        "WZ1" => build("WZ1", Zooming, WV1_P.to_vec(), 2_000, "bernoulli"),
        "WZ2" => build("WZ2", Zooming, WV2_P.to_vec(), 2_000, "bernoulli"),
        "WZ3" => build("WZ3", Zooming, WV3_P.to_vec(), 2_000, "bernoulli"),
        "WS4" => build("WS4", Wmv, WS4_P.to_vec(), 1_000, "bernoulli"),
        "WS5" => build("WS5", Wmv, WS5_P.to_vec(), 1_000, "bernoulli"),
        "WS6" => build("WS6", Wmv, WS6_P.to_vec(), 1_000, "bernoulli"),
        "WE4" => build("WE4", See, WS4_P.to_vec(), 1_000, "bernoulli"),
        "WE5" => build("WE5", See, WS5_P.to_vec(), 1_000, "bernoulli"),
        "WE6" => build("WE6", See, WS6_P.to_vec(), 1_000, "bernoulli"),
        "WG1" => build(
            "WG1",
            Wmv,
            pick(&GSM8K_ACC, &[NOTUS, QWEN, MISTRAL]),
            10_000,
            "gsm8k",
        ),
        "ZG1" => build(
            "ZG1",
            Zooming,
            pick(&GSM8K_ACC, &[NOTUS, QWEN, MISTRAL]),
            10_000,
            "gsm8k",
        ),
        "WG2" => build(
            "WG2",
            Wmv,
            pick(
                &GSM8K_ACC,
                &[SAMANTHA, NOTUS, QWEN, MISTRAL, GEMMA, DEEPSEEK],
            ),
            10_000,
            "gsm8k",
        ),
        "ZG2" => build(
            "ZG2",
            Zooming,
            pick(
                &GSM8K_ACC,
                &[SAMANTHA, NOTUS, QWEN, MISTRAL, GEMMA, DEEPSEEK],
            ),
            10_000,
            "gsm8k",
        ),
        "WG3" => build("WG3", Wmv, GSM8K_ACC.to_vec(), 10_000, "gsm8k"),
        "ZG3" => build("ZG3", Zooming, GSM8K_ACC.to_vec(), 10_000, "gsm8k"),
        "CS1" => build(
            "CS1",
            See,
            pick(&CQA_ACC, &[GEMMA, PHI4, DEEPSEEK]),
            10_000,
            "commonsenseqa",
        ),
        "CC1" => build(
            "CC1",
            Cucb,
            pick(&CQA_ACC, &[GEMMA, PHI4, DEEPSEEK]),
            10_000,
            "commonsenseqa",
        ),
        "CS2" => build(
            "CS2",
            See,
            pick(&CQA_ACC, &[MISTRAL, QWEN, GEMMA, PHI4, DEEPSEEK]),
            10_000,
            "commonsenseqa",
        ),
        "CC2" => build(
            "CC2",
            Cucb,
            pick(&CQA_ACC, &[MISTRAL, QWEN, GEMMA, PHI4, DEEPSEEK]),
            10_000,
            "commonsenseqa",
        ),
        "CS3" => build(
            "CS3",
            See,
            pick(
                &CQA_ACC,
                &[
                    AYA, OPENORCA, SAMANTHA, NOTUS, MISTRAL, QWEN, GEMMA, PHI4, DEEPSEEK,
                ],
            ),
            10_000,
            "commonsenseqa",
        ),
        "CC3" => build(
            "CC3",
            Cucb,
            pick(
                &CQA_ACC,
                &[
                    AYA, OPENORCA, SAMANTHA, NOTUS, MISTRAL, QWEN, GEMMA, PHI4, DEEPSEEK,
                ],
            ),
            10_000,
            "commonsenseqa",
        ),
        "WB1" => build(
            "WB1",
            Wmv,
            pick(&BOOLQ_ACC, &[MISTRAL, GEMMA, DEEPSEEK, PHI4]),
            1_000,
            "boolq",
        ),
        "ZB1" => build(
            "ZB1",
            Zooming,
            pick(&BOOLQ_ACC, &[MISTRAL, GEMMA, DEEPSEEK, PHI4]),
            1_000,
            "boolq",
        ),
        "WB2" => build(
            "WB2",
            Wmv,
            pick(&BOOLQ_ACC, &[QWEN, MISTRAL, GEMMA, DEEPSEEK, PHI4]),
            1_000,
            "boolq",
        ),
        "ZB2" => build(
            "ZB2",
            Zooming,
            pick(&BOOLQ_ACC, &[QWEN, MISTRAL, GEMMA, DEEPSEEK, PHI4]),
            1_000,
            "boolq",
        ),
        "WB3" => build(
            "WB3",
            Wmv,
            pick(
                &BOOLQ_ACC,
                &[
                    SAMANTHA, QWEN, OPENORCA, NOTUS, AYA, MISTRAL, GEMMA, DEEPSEEK, PHI4,
                ],
            ),
            1_000,
            "boolq",
        ),
        "ZB3" => build(
            "ZB3",
            Zooming,
            pick(
                &BOOLQ_ACC,
                &[
                    SAMANTHA, QWEN, OPENORCA, NOTUS, AYA, MISTRAL, GEMMA, DEEPSEEK, PHI4,
                ],
            ),
            1_000,
            "boolq",
        ),
        other => {
            return Err(Error::SchemaViolation(format!("unknown preset {other:?}")));
        }
    };
    Ok(cfg)
}

pub fn preset_names() -> Vec<&'static str> {
    vec![
        "SE1", "SE2", "SE3", "SC1", "SC2", "SC3", "WV1", "WV2", "WV3", "WZ1", "WZ2", "WZ3", "WS4",
        "WS5", "WS6", "WE4", "WE5", "WE6", "WG1", "WG2", "WG3", "ZG1", "ZG2", "ZG3", "CS1", "CS2",
        "CS3", "CC1", "CC2", "CC3", "WB1", "WB2", "WB3", "ZB1", "ZB2", "ZB3",
    ]
}

/// splitmix64 step; the standard 64-bit avalanche mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Trial stream seed: mixes (master, trial, stream) through splitmix64.
pub fn mix_seed(master: u64, trial: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(trial.wrapping_add(1))) ^ stream)
}

/// Aggregated results of one experiment run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub algorithm: Algorithm,
    pub n: usize,
    pub optimal_committee_size: usize,
    pub optimal_value: f64,
    pub min_gap: f64,
    pub mean_regret: f64,
    pub stderr_regret: f64,
    pub empirical_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_reduction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    pub domain: String,
    /// Mean cumulative regret per round; not serialized into summaries.
    #[serde(skip)]
    pub mean_curve: Vec<f64>,
}

impl RunSummary {
    /// %R-down = 1 - R_T / R_T(baseline).
    pub fn set_baseline(&mut self, baseline: &RunSummary) {
        if baseline.mean_regret > 0.0 {
            self.regret_reduction = Some(1.0 - self.mean_regret / baseline.mean_regret);
            self.baseline = Some(baseline.name.clone());
        }
    }
}

/// Full per-trial traces plus the aggregate summary.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub optimum_value: f64,
    pub optimum_committee_size: usize,
    pub traces: Vec<RegretTrace>,
    pub summary: RunSummary,
}

fn true_competencies(experts: &[ExpertSpec]) -> Result<Vec<f64>> {
    experts
        .iter()
        .map(|e| match e {
            ExpertSpec::Bernoulli { p } => Ok(*p),
            ExpertSpec::Trace { outcomes } => {
                let hits = outcomes.iter().filter(|&&b| b).count();
                Ok(hits as f64 / outcomes.len() as f64)
            }
            ExpertSpec::Remote { .. } => Err(Error::SchemaViolation(
                "remote experts have no known competencies for regret accounting".into(),
            )),
        })
        .collect()
}

fn min_pairwise_gap(p: &[f64]) -> f64 {
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

/// Descending competencies with exact duplicates nudged apart, plus the
/// original index of each rank.
fn sorted_with_order(p: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    let mut sorted: Vec<f64> = order.iter().map(|&i| p[i]).collect();
    for k in 1..sorted.len() {
        if sorted[k] >= sorted[k - 1] {
            sorted[k] = (sorted[k - 1] - 1e-9).max(0.0);
        }
    }
    (sorted, order)
}

/// True-competency optimum the regret is measured against.
fn compute_optimum(config: &ExperimentConfig, p_true: &[f64]) -> Result<(f64, usize)> {
    let (sorted, _) = sorted_with_order(p_true);
    match config.algo {
        Algorithm::See | Algorithm::Cucb => {
            let c = oec_prefix(&sorted)?;
            Ok((c.value, c.members.len()))
        }
        Algorithm::Wmv | Algorithm::Zooming => {
            let sol = solve_optimal_weights(&sorted, config.quota_value())?;
            Ok((sol.objective, p_true.len()))
        }
    }
}

struct TrialOutput {
    trace: RegretTrace,
    realized_sum: f64,
}

/// Runs every trial with derived seeds and aggregates regret and accuracy.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let p_true = true_competencies(&config.experts)?;
    let (optimum_value, optimum_committee_size) = compute_optimum(config, &p_true)?;

    let run_trials = || -> Result<Vec<TrialOutput>> {
        use rayon::prelude::*;
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                run_trial(config, &p_true, optimum_value, trial).map_err(|e| Error::TrialFailure {
                    trial: trial as usize,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let outputs = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(run_trials),
        None => run_trials(),
    }?;

    let trials = outputs.len() as f64;
    let totals: Vec<f64> = outputs.iter().map(|o| o.trace.total()).collect();
    let mean_regret = totals.iter().sum::<f64>() / trials;
    let stderr_regret = if outputs.len() > 1 {
        let var = totals
            .iter()
            .map(|t| (t - mean_regret).powi(2))
            .sum::<f64>()
            / (trials - 1.0);
        (var / trials).sqrt()
    } else {
        0.0
    };
    let horizon = config.horizon as usize;
    let mut mean_curve = vec![0.0f64; horizon];
    for o in &outputs {
        for (t, &c) in o.trace.cumulative.iter().enumerate() {
            mean_curve[t] += c;
        }
    }
    for c in &mut mean_curve {
        *c /= trials;
    }
    let empirical_accuracy =
        outputs.iter().map(|o| o.realized_sum).sum::<f64>() / (trials * config.horizon as f64);

    let summary = RunSummary {
        name: config.name.clone(),
        algorithm: config.algo,
        n: p_true.len(),
        optimal_committee_size: optimum_committee_size,
        optimal_value: optimum_value,
        min_gap: min_pairwise_gap(&p_true),
        mean_regret,
        stderr_regret,
        empirical_accuracy,
        regret_reduction: None,
        baseline: None,
        domain: config.domain.clone(),
        mean_curve,
    };
    Ok(ExperimentResult {
        config: config.clone(),
        optimum_value,
        optimum_committee_size,
        traces: outputs.into_iter().map(|o| o.trace).collect(),
        summary,
    })
}

fn dummy_context(domain: &str) -> TaskContext {
    let domain = domain.parse::<Domain>().unwrap_or(Domain::BoolQ);
    TaskContext {
        question: String::new(),
        choices: None,
        truth: "true".into(),
        domain,
    }
}

fn run_trial(
    config: &ExperimentConfig,
    p_true: &[f64],
    optimum: f64,
    trial: u64,
) -> Result<TrialOutput> {
    let mut outcome_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, trial, 0));
    let mut tie_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, trial, 1));
    let mut algo_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, trial, 2));
    let ctx = dummy_context(&config.domain);
    let n = p_true.len();
    let horizon = config.horizon;
    let quota = config.quota_value();
    let mut trace = RegretTrace::default();
    let mut realized_sum = 0.0f64;

    match config.algo {
        Algorithm::See => {
            let mut table = EstimatorTable::new(n, config.delta_mode());
            enum Driver {
                Plain(SeeState),
                Targeted(TargetedSeeState),
            }
            let mut driver = match config.targeted_m {
                Some(m) => {
                    let groups = crate::bandit::targeted_m_schedule(n, m, 1)?.len() as u64;
                    let t0 = config
                        .burn_in_t0
                        .unwrap_or_else(|| (horizon / (4 * groups)).max(1));
                    Driver::Targeted(TargetedSeeState::new(n, m, t0)?)
                }
                None => Driver::Plain(SeeState::new(n)),
            };
            let mut last_play: Vec<usize> = Vec::new();
            let mut last_value = 0.0f64;
            let mut last_digest = String::new();
            for round in 0..horizon {
                let play = match &mut driver {
                    Driver::Plain(state) => {
                        let (next, play) = see_round(state, &table);
                        *state = next;
                        play
                    }
                    Driver::Targeted(state) => {
                        let (next, play) = targeted_see_round(state, &table);
                        *state = next;
                        play
                    }
                };
                let outcomes = sample_outcomes(
                    &config.experts,
                    &ctx,
                    round as usize,
                    &mut outcome_rng,
                    None,
                )?;
                let observed: Vec<(ExpertId, bool)> =
                    play.iter().map(|&i| (ExpertId(i), outcomes[i])).collect();
                table = table.update_estimates(&observed);
                if realized_majority_score(&outcomes, &play, &mut tie_rng) {
                    realized_sum += 1.0;
                }
                if play != last_play {
                    last_value =
                        p_maj_egalitarian_dp(&play.iter().map(|&i| p_true[i]).collect::<Vec<_>>())?;
                    last_digest = Play::Committee(play.clone()).digest();
                    last_play = play;
                }
                trace.push(optimum - last_value, last_digest.clone());
            }
        }
        Algorithm::Wmv => {
            let mut table = EstimatorTable::new(n, config.delta_mode());
            let mut state = WmvState::new(quota, config.resolve_period);
            let mut last_theta: Vec<f64> = Vec::new();
            let mut last_value = 0.0f64;
            let mut last_digest = String::new();
            for round in 0..horizon {
                let (next, play) = wmv_round(&state, &table)?;
                state = next;
                let outcomes = sample_outcomes(
                    &config.experts,
                    &ctx,
                    round as usize,
                    &mut outcome_rng,
                    None,
                )?;
                let observed: Vec<(ExpertId, bool)> =
                    (0..n).map(|i| (ExpertId(i), outcomes[i])).collect();
                table = table.update_estimates(&observed);
                if realized_weighted_score(&outcomes, &play.theta, quota, &mut tie_rng) {
                    realized_sum += 1.0;
                }
                if play.theta != last_theta {
                    last_value = p_maj_weighted(p_true, &play.theta, quota)?;
                    last_digest = Play::Weights {
                        theta: play.theta.clone(),
                        quota,
                    }
                    .digest();
                    last_theta = play.theta.clone();
                }
                trace.push(optimum - last_value, last_digest.clone());
            }
        }
        Algorithm::Cucb => {
            let mut state = if n <= 10 {
                CucbState::all_subsets(n)?
            } else {
                let (_, order) = sorted_with_order(p_true);
                CucbState::prefixes(&order)?
            };
            let mut arm_values: Vec<Option<f64>> = vec![None; state.arms().len()];
            let mut arm_digests: Vec<Option<String>> = vec![None; state.arms().len()];
            for round in 0..horizon {
                let arm = state.select();
                let committee = state.arms()[arm].clone();
                let outcomes = sample_outcomes(
                    &config.experts,
                    &ctx,
                    round as usize,
                    &mut outcome_rng,
                    None,
                )?;
                let reward = realized_majority_score(&outcomes, &committee, &mut tie_rng);
                state.observe(arm, f64::from(u8::from(reward)));
                realized_sum += f64::from(u8::from(reward));
                let value = match arm_values[arm] {
                    Some(v) => v,
                    None => {
                        let v = p_maj_egalitarian_dp(
                            &committee.iter().map(|&i| p_true[i]).collect::<Vec<_>>(),
                        )?;
                        arm_values[arm] = Some(v);
                        v
                    }
                };
                let digest = arm_digests[arm]
                    .get_or_insert_with(|| Play::Committee(committee.clone()).digest())
                    .clone();
                trace.push(optimum - value, digest);
            }
        }
        Algorithm::Zooming => {
            let arms = zooming_candidates(n, quota, 512, &mut algo_rng);
            let mut state = ZoomingState::new(arms, quota, horizon as f64);
            let mut arm_values: Vec<Option<f64>> = vec![None; 512 + n + 1];
            let mut arm_digests: Vec<Option<String>> = vec![None; 512 + n + 1];
            for round in 0..horizon {
                let arm = state.select();
                let theta = state.arm(arm).to_vec();
                let outcomes = sample_outcomes(
                    &config.experts,
                    &ctx,
                    round as usize,
                    &mut outcome_rng,
                    None,
                )?;
                let reward = realized_weighted_score(&outcomes, &theta, quota, &mut tie_rng);
                state.observe(arm, f64::from(u8::from(reward)));
                realized_sum += f64::from(u8::from(reward));
                let value = match arm_values[arm] {
                    Some(v) => v,
                    None => {
                        let v = p_maj_weighted(p_true, &theta, quota)?;
                        arm_values[arm] = Some(v);
                        v
                    }
                };
                let digest = arm_digests[arm]
                    .get_or_insert_with(|| {
                        Play::Weights {
                            theta: theta.clone(),
                            quota,
                        }
                        .digest()
                    })
                    .clone();
                trace.push(optimum - value, digest);
            }
        }
    }
    Ok(TrialOutput {
        trace,
        realized_sum,
    })
}

/// Writes per-round traces: trial, t, instantaneous and cumulative regret,
/// and the played-configuration digest. LF line endings, full float precision.
pub fn emit_csv(traces: &[RegretTrace], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(b"trial,t,inst_regret,cum_regret,committee_digest\n")?;
    for (trial, trace) in traces.iter().enumerate() {
        for t in 0..trace.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                trial,
                t + 1,
                trace.instantaneous[t],
                trace.cumulative[t],
                trace.digests[t]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes run summaries as a JSON array. Summaries lacking a baseline simply
/// omit the reduction field (noted on stderr).
pub fn emit_summary(summaries: &[RunSummary], path: &Path) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::SchemaViolation("no summaries to emit".into()));
    }
    for s in summaries {
        if s.regret_reduction.is_none() {
            eprintln!(
                "note: summary {:?} has no baseline; regret_reduction omitted",
                s.name
            );
        }
    }
    let json = serde_json::to_string_pretty(summaries)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    name: &'a str,
    algorithm: Algorithm,
    n: usize,
    horizon: u64,
    trials: u64,
    seed: u64,
    seed_mixer: &'static str,
    quota: f64,
    delta_mode: DeltaSchedule,
    resolve_period: u64,
    targeted_m: Option<usize>,
    domain: &'a str,
    /// True when expert competencies replay an offline benchmark table.
    replay: bool,
    competencies: Vec<f64>,
}

/// Writes run provenance: config echo, seed derivation, and replay flag.
pub fn emit_metadata(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let meta = Metadata {
        name: &config.name,
        algorithm: config.algo,
        n: config.experts.len(),
        horizon: config.horizon,
        trials: config.trials,
        seed: config.seed,
        seed_mixer: "splitmix64(splitmix64(master ^ splitmix64(trial+1)) ^ stream)",
        quota: config.quota_value(),
        delta_mode: config.delta_mode,
        resolve_period: config.resolve_period,
        targeted_m: config.targeted_m,
        domain: &config.domain,
        replay: config.domain != "bernoulli",
        competencies: true_competencies(&config.experts)?,
    };
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Runs the experiment and, when an output directory is configured, writes
/// regret.csv, summary.json, and metadata.json into it.
pub fn run_and_emit(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = run_experiment(config)?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        emit_csv(&result.traces, &dir.join("regret.csv"))?;
        emit_summary(
            std::slice::from_ref(&result.summary),
            &dir.join("summary.json"),
        )?;
        emit_metadata(config, &dir.join("metadata.json"))?;
    }
    Ok(result)
}

/// One oracle-equivalence check outcome.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The three oracle-equivalence suites: enumeration vs DP accuracy, prefix
/// vs brute-force committees, and branch-and-bound vs family enumeration.
pub fn verify_oracles(
    vectors: usize,
    committees: usize,
    families: usize,
    seed: u64,
) -> Vec<VerifyReport> {
    use crate::mip::{enumerate_families_bruteforce, solve_optimal_weights};
    use crate::votemath::{brute_force_oec, p_maj_egalitarian};

    let mut reports = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..vectors {
        let m = rng.gen_range(1..=12);
        let p: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let a = p_maj_egalitarian(&p).unwrap();
        let b = p_maj_egalitarian_dp(&p).unwrap();
        let d = (a - b).abs();
        worst = worst.max(d);
        if d > 1e-12 {
            failures += 1;
        }
    }
    reports.push(VerifyReport {
        name: format!("egalitarian enumeration vs count-DP ({vectors} vectors, N<=12)"),
        passed: failures == 0,
        detail: format!("max |diff| = {worst:.3e}"),
    });

    let mut failures = 0usize;
    for _ in 0..committees {
        let m = rng.gen_range(1..=10);
        let mut p: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        p.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let a = oec_prefix(&p).unwrap();
        let b = brute_force_oec(&p).unwrap();
        if a.members != b.members || a.value != b.value {
            failures += 1;
        }
    }
    reports.push(VerifyReport {
        name: format!("prefix committee vs subset brute force ({committees} instances, N<=10)"),
        passed: failures == 0,
        detail: format!("{failures} mismatches"),
    });

    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..families {
        let m = rng.gen_range(1..=4);
        let mut p: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        p.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let q = m as f64 / 2.0;
        let a = solve_optimal_weights(&p, q).unwrap();
        let b = enumerate_families_bruteforce(&p, q).unwrap();
        let d = (a.objective - b.objective).abs();
        worst = worst.max(d);
        if d > 1e-9 || a.family != b.family {
            failures += 1;
        }
    }
    reports.push(VerifyReport {
        name: format!("weight solver vs family enumeration ({families} instances, N<=4)"),
        passed: failures == 0,
        detail: format!("max |diff| = {worst:.3e}, {failures} mismatches"),
    });

    reports
}
