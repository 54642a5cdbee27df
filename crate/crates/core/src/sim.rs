//! Synthetic data generation and the replication study: MSE, sign recovery,
//! curl detection and credible-interval coverage for BIBT and the transitive
//! baseline.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::OperatorSet;
use crate::error::{check_len, Error, Result};
use crate::measures::{credible_interval, global_measure_trace};
use crate::sampler::{
    default_labels, run_baseline_chain, run_chain, ComparisonData, Hyperparams, ModelKind,
    PosteriorDraws,
};
use crate::seed::{derive_seed, rng_from_seed};

/// Curl flow entries with magnitude at or below this count as zero.
pub const ZERO_FLOW_TOL: f64 = 1e-12;

pub const DEFAULT_DETECTION_LEVELS: [f64; 7] = [0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99];
pub const COVERAGE_LEVELS: [f64; 2] = [0.90, 0.95];

// Seed path tags under (master_seed, replication).
const STREAM_TRUTH: u64 = 0;
const STREAM_BIBT: u64 = 1;
const STREAM_BASELINE: u64 = 2;

/// Games per pair in a synthetic design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trials {
    Constant(u32),
    /// `n_ij` drawn uniformly from `lo..=hi`, independently per edge.
    Range { lo: u32, hi: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_entities: usize,
    pub trials: Trials,
    /// Fraction of curl weights set to zero; 1 gives a transitive truth.
    pub sparsity: f64,
    pub score_scale: f64,
    pub curl_scale: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub mcmc: Hyperparams,
    pub fit_baseline: bool,
    pub detection_levels: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_entities: 10,
            trials: Trials::Constant(100),
            sparsity: 0.5,
            score_scale: 1.0,
            curl_scale: 1.0,
            replications: 100,
            master_seed: 0,
            mcmc: Hyperparams::default(),
            fit_baseline: true,
            detection_levels: DEFAULT_DETECTION_LEVELS.to_vec(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.n_entities < 3 {
            return bad(format!("need at least 3 entities, got {}", self.n_entities));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return bad(format!("sparsity {} outside [0, 1]", self.sparsity));
        }
        if let Trials::Range { lo, hi } = self.trials {
            if lo < 1 || lo > hi {
                return bad(format!("trial range {lo}..{hi} must satisfy 1 <= lo <= hi"));
            }
        }
        if !(self.score_scale >= 0.0 && self.curl_scale >= 0.0)
            || !self.score_scale.is_finite()
            || !self.curl_scale.is_finite()
        {
            return bad("score and curl scales must be finite and non-negative".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if let Some(l) = self.detection_levels.iter().find(|l| !(0.0..1.0).contains(*l)) {
            return bad(format!("detection level {l} outside [0, 1)"));
        }
        self.mcmc.validate()
    }

    /// Number of nonzero curl weights: `ceil((1 - sparsity) K)`.
    pub fn active_weights(&self, k: usize) -> usize {
        (((1.0 - self.sparsity) * k as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Ground truth behind one synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub s: DVector<f64>,
    pub w: DVector<f64>,
    pub m: DVector<f64>,
    pub m_grad: DVector<f64>,
    pub m_curl: DVector<f64>,
}

impl Truth {
    pub fn new(s: DVector<f64>, w: DVector<f64>, ops: &OperatorSet) -> Result<Self> {
        let m_grad = ops.grad_flow(&s)?.0;
        let m_curl = ops.curl_flow(&w)?.0;
        Ok(Self {
            m: &m_grad + &m_curl,
            s,
            w,
            m_grad,
            m_curl,
        })
    }
}

/// Draws a truth and binomial outcomes for one replication.
///
/// Randomness depends only on `(cfg.master_seed, replication)`.
pub fn generate_synthetic(
    cfg: &SimConfig,
    ops: &OperatorSet,
    replication: usize,
) -> Result<(Truth, ComparisonData)> {
    cfg.validate()?;
    check_len("entities", cfg.n_entities, ops.n_entities())?;
    let mut rng = rng_from_seed(derive_seed(cfg.master_seed, &[replication as u64, STREAM_TRUTH]));
    let n = cfg.n_entities;
    let k = ops.n_weights();

    let score_dist = Normal::new(0.0, cfg.score_scale).expect("finite scale");
    let mut s = DVector::from_iterator(n, (0..n).map(|_| score_dist.sample(&mut rng)));
    let mean = s.mean();
    s.add_scalar_mut(-mean);

    let curl_dist = Normal::new(0.0, cfg.curl_scale).expect("finite scale");
    let mut w = DVector::zeros(k);
    let mut active = rand::seq::index::sample(&mut rng, k, cfg.active_weights(k)).into_vec();
    active.sort_unstable();
    for l in active {
        w[l] = curl_dist.sample(&mut rng);
    }

    let truth = Truth::new(s, w, ops)?;
    let mut wins = Vec::with_capacity(ops.n_edges());
    let mut trials = Vec::with_capacity(ops.n_edges());
    for e in 0..ops.n_edges() {
        let n_e = match cfg.trials {
            Trials::Constant(c) => c,
            Trials::Range { lo, hi } => rng.random_range(lo..=hi),
        };
        let p = logistic(truth.m[e]);
        let y = Binomial::new(n_e as u64, p)
            .map_err(|e| Error::Numerical {
                iteration: 0,
                reason: format!("binomial outcome draw: {e}"),
            })?
            .sample(&mut rng) as u32;
        wins.push(y);
        trials.push(n_e);
    }
    let data = ComparisonData::new(default_labels(n), wins, trials)?;
    Ok((truth, data))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mse {
    pub m: f64,
    pub grad: f64,
    pub curl: f64,
}

fn check_truth(truth: &Truth, draws: &PosteriorDraws) -> Result<()> {
    check_len("edges", truth.m.len(), draws.matchup.ncols())?;
    check_len("entities", truth.s.len(), draws.scores.ncols())
}

/// Posterior-mean squared errors per edge, each component on the flow scale.
pub fn compute_mse(truth: &Truth, draws: &PosteriorDraws) -> Result<Mse> {
    check_truth(truth, draws)?;
    let e = truth.m.len() as f64;
    Ok(Mse {
        m: (draws.mean_matchup() - &truth.m).norm_squared() / e,
        grad: (draws.mean_grad_flow() - &truth.m_grad).norm_squared() / e,
        curl: (draws.mean_curl_flow() - &truth.m_curl).norm_squared() / e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Fraction of edges with `M_hat * M_true > 0`.
    pub accuracy: f64,
    /// Edges whose true match-up is exactly zero (always counted as misses).
    pub zero_truth_edges: usize,
}

pub fn compute_recovery_accuracy(truth: &Truth, draws: &PosteriorDraws) -> Result<Accuracy> {
    check_truth(truth, draws)?;
    let est = draws.mean_matchup();
    let hits = est.iter().zip(truth.m.iter()).filter(|(a, b)| *a * *b > 0.0).count();
    Ok(Accuracy {
        accuracy: hits as f64 / est.len() as f64,
        zero_truth_edges: truth.m.iter().filter(|&&v| v == 0.0).count(),
    })
}

/// Recall, precision and F1 for nonzero curl-flow detection at one level.
/// Undefined ratios are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub level: f64,
    pub true_positives: usize,
    pub positives: usize,
    pub detected: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn sorted_column(draws: &PosteriorDraws, which: Component, e: usize) -> Vec<f64> {
    let m = match which {
        Component::M => &draws.matchup,
        Component::Grad => &draws.grad_flow,
        Component::Curl => &draws.curl_flow,
    };
    let mut v: Vec<f64> = m.column(e).iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn compute_detection(
    truth: &Truth,
    draws: &PosteriorDraws,
    levels: &[f64],
) -> Result<Vec<Detection>> {
    check_truth(truth, draws)?;
    let n_edges = truth.m.len();
    let columns: Vec<Vec<f64>> = (0..n_edges)
        .map(|e| sorted_column(draws, Component::Curl, e))
        .collect();
    let truly_nonzero: Vec<bool> = truth.m_curl.iter().map(|v| v.abs() > ZERO_FLOW_TOL).collect();
    let positives = truly_nonzero.iter().filter(|&&p| p).count();
    Ok(levels
        .iter()
        .map(|&level| {
            let mut tp = 0;
            let mut detected = 0;
            for (col, &pos) in columns.iter().zip(&truly_nonzero) {
                let (lo, hi) = credible_interval(col, level);
                if lo > 0.0 || hi < 0.0 {
                    detected += 1;
                    if pos {
                        tp += 1;
                    }
                }
            }
            let recall = (positives > 0).then(|| tp as f64 / positives as f64);
            let precision = (detected > 0).then(|| tp as f64 / detected as f64);
            let f1 = match (recall, precision) {
                (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (r + p)),
                _ => None,
            };
            Detection {
                level,
                true_positives: tp,
                positives,
                detected,
                recall,
                precision,
                f1,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    M,
    Grad,
    Curl,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::M, Component::Grad, Component::Curl];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::M => "m",
            Component::Grad => "grad",
            Component::Curl => "curl",
        }
    }
}

/// Fraction of edges whose equal-tailed interval at `level` contains the
/// truth, per component. `curl` is `None` for the baseline, which has no
/// curl component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub level: f64,
    pub m: f64,
    pub grad: f64,
    pub curl: Option<f64>,
}

pub fn compute_coverage(
    truth: &Truth,
    draws: &PosteriorDraws,
    levels: &[f64],
) -> Result<Vec<Coverage>> {
    check_truth(truth, draws)?;
    let n_edges = truth.m.len();
    let cols = |c: Component| -> Vec<Vec<f64>> {
        (0..n_edges).map(|e| sorted_column(draws, c, e)).collect()
    };
    let (m_cols, g_cols, c_cols) = (cols(Component::M), cols(Component::Grad), cols(Component::Curl));
    let cover = |columns: &[Vec<f64>], target: &DVector<f64>, level: f64| -> f64 {
        let inside = columns
            .iter()
            .zip(target.iter())
            .filter(|(col, &t)| {
                let (lo, hi) = credible_interval(col, level);
                lo <= t && t <= hi
            })
            .count();
        inside as f64 / n_edges as f64
    };
    Ok(levels
        .iter()
        .map(|&level| Coverage {
            level,
            m: cover(&m_cols, &truth.m, level),
            grad: cover(&g_cols, &truth.m_grad, level),
            curl: match draws.model {
                ModelKind::Bibt => Some(cover(&c_cols, &truth.m_curl, level)),
                ModelKind::Baseline => None,
            },
        })
        .collect())
}

/// Every metric for one fitted model on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub mse: Mse,
    pub accuracy: Accuracy,
    /// `None` for the baseline, which cannot detect curl.
    pub detection: Option<Vec<Detection>>,
    pub coverage: Vec<Coverage>,
    pub mean_global_measure: f64,
    pub seconds: f64,
}

pub fn evaluate(truth: &Truth, draws: &PosteriorDraws, detection_levels: &[f64]) -> Result<ModelMetrics> {
    let trace = global_measure_trace(draws);
    Ok(ModelMetrics {
        mse: compute_mse(truth, draws)?,
        accuracy: compute_recovery_accuracy(truth, draws)?,
        detection: match draws.model {
            ModelKind::Bibt => Some(compute_detection(truth, draws, detection_levels)?),
            ModelKind::Baseline => None,
        },
        coverage: compute_coverage(truth, draws, &COVERAGE_LEVELS)?,
        mean_global_measure: trace.iter().sum::<f64>() / trace.len().max(1) as f64,
        seconds: draws.elapsed_seconds,
    })
}

/// Result of fitting one model; a failed chain keeps its error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOutcome {
    Ok(ModelMetrics),
    Failed(String),
}

impl ModelOutcome {
    pub fn metrics(&self) -> Option<&ModelMetrics> {
        match self {
            ModelOutcome::Ok(m) => Some(m),
            ModelOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub bibt: ModelOutcome,
    pub baseline: Option<ModelOutcome>,
}

/// Averages over the replications whose chain succeeded. Optional metrics
/// are averaged over the replications where they are defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: ModelKind,
    pub succeeded: usize,
    pub failed: usize,
    pub mse: Option<Mse>,
    pub accuracy: Option<f64>,
    pub detection: Vec<AggregateDetection>,
    pub coverage: Vec<AggregateCoverage>,
    pub mean_global_measure: Option<f64>,
    pub mean_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateDetection {
    pub level: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateCoverage {
    pub level: f64,
    pub m: Option<f64>,
    pub grad: Option<f64>,
    pub curl: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn aggregate(model: ModelKind, outcomes: &[&ModelOutcome], detection_levels: &[f64]) -> ModelAggregate {
    let ok: Vec<&ModelMetrics> = outcomes.iter().filter_map(|o| o.metrics()).collect();
    let avg = |f: &dyn Fn(&ModelMetrics) -> Option<f64>| mean_of(ok.iter().map(|m| f(m)));
    let mse = (!ok.is_empty()).then(|| Mse {
        m: avg(&|m| Some(m.mse.m)).unwrap_or(f64::NAN),
        grad: avg(&|m| Some(m.mse.grad)).unwrap_or(f64::NAN),
        curl: avg(&|m| Some(m.mse.curl)).unwrap_or(f64::NAN),
    });
    let detection = match model {
        ModelKind::Baseline => Vec::new(),
        ModelKind::Bibt => detection_levels
            .iter()
            .enumerate()
            .map(|(i, &level)| {
                let at = |f: fn(&Detection) -> Option<f64>| {
                    avg(&|m| m.detection.as_ref().and_then(|d| d.get(i)).and_then(f))
                };
                AggregateDetection {
                    level,
                    recall: at(|d| d.recall),
                    precision: at(|d| d.precision),
                    f1: at(|d| d.f1),
                }
            })
            .collect(),
    };
    let coverage = COVERAGE_LEVELS
        .iter()
        .enumerate()
        .map(|(i, &level)| AggregateCoverage {
            level,
            m: avg(&|m| Some(m.coverage[i].m)),
            grad: avg(&|m| Some(m.coverage[i].grad)),
            curl: avg(&|m| m.coverage[i].curl),
        })
        .collect();
    ModelAggregate {
        model,
        succeeded: ok.len(),
        failed: outcomes.len() - ok.len(),
        mse,
        accuracy: avg(&|m| Some(m.accuracy.accuracy)),
        detection,
        coverage,
        mean_global_measure: avg(&|m| Some(m.mean_global_measure)),
        mean_seconds: avg(&|m| Some(m.seconds)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: SimConfig,
    pub replications: Vec<ReplicationResult>,
    pub bibt: ModelAggregate,
    pub baseline: Option<ModelAggregate>,
}

fn fit_and_score(
    kind: ModelKind,
    truth: &Truth,
    data: &ComparisonData,
    cfg: &SimConfig,
    ops: &OperatorSet,
    replication: usize,
) -> ModelOutcome {
    let tag = match kind {
        ModelKind::Bibt => STREAM_BIBT,
        ModelKind::Baseline => STREAM_BASELINE,
    };
    let hp = Hyperparams {
        seed: derive_seed(cfg.master_seed, &[replication as u64, tag]),
        ..cfg.mcmc.clone()
    };
    let draws = match kind {
        ModelKind::Bibt => run_chain(data, &hp, ops),
        ModelKind::Baseline => run_baseline_chain(data, &hp, ops),
    };
    match draws.and_then(|d| evaluate(truth, &d, &cfg.detection_levels)) {
        Ok(m) => ModelOutcome::Ok(m),
        Err(e) => ModelOutcome::Failed(e.to_string()),
    }
}

pub fn run_replication(cfg: &SimConfig, ops: &OperatorSet, replication: usize) -> Result<ReplicationResult> {
    let (truth, data) = generate_synthetic(cfg, ops, replication)?;
    let bibt = fit_and_score(ModelKind::Bibt, &truth, &data, cfg, ops, replication);
    let baseline = cfg
        .fit_baseline
        .then(|| fit_and_score(ModelKind::Baseline, &truth, &data, cfg, ops, replication));
    Ok(ReplicationResult {
        replication,
        bibt,
        baseline,
    })
}

/// Runs all replications, `jobs` at a time (`None` uses rayon's default).
/// Results are in replication order and do not depend on `jobs`.
pub fn run_study(cfg: &SimConfig, jobs: Option<usize>) -> Result<StudyReport> {
    cfg.validate()?;
    let ops = OperatorSet::new(cfg.n_entities)?;
    let work = || -> Result<Vec<ReplicationResult>> {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, &ops, r))
            .collect()
    };
    let replications = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let bibt_outcomes: Vec<&ModelOutcome> = replications.iter().map(|r| &r.bibt).collect();
    let baseline_outcomes: Vec<&ModelOutcome> =
        replications.iter().filter_map(|r| r.baseline.as_ref()).collect();
    Ok(StudyReport {
        bibt: aggregate(ModelKind::Bibt, &bibt_outcomes, &cfg.detection_levels),
        baseline: cfg
            .fit_baseline
            .then(|| aggregate(ModelKind::Baseline, &baseline_outcomes, &cfg.detection_levels)),
        config: cfg.clone(),
        replications,
    })
}

/// One study per sparsity value, all other settings shared.
pub fn run_sparsity_sweep(
    cfg: &SimConfig,
    sparsities: &[f64],
    jobs: Option<usize>,
) -> Result<Vec<StudyReport>> {
    sparsities
        .iter()
        .map(|&sp| run_study(&SimConfig { sparsity: sp, ..cfg.clone() }, jobs))
        .collect()
}

/// Published coverage figures for the clustered intransitive comparison
/// model, used only when rendering side-by-side reports.
pub mod reference {
    /// `(CP90(M), CP95(M), CP90(curl), CP95(curl))` at N = 10, n = 100.
    pub const ICBT_SPARSITY_HALF: (f64, f64, f64, f64) = (0.678, 0.748, 0.554, 0.633);
    pub const ICBT_SPARSITY_ONE: (f64, f64, f64, f64) = (0.708, 0.795, 0.786, 0.863);
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn cfg(n: usize, sparsity: f64) -> SimConfig {
        SimConfig {
            n_entities: n,
            sparsity,
            replications: 2,
            master_seed: 99,
            mcmc: Hyperparams {
                n_iterations: 120,
                burn_in: 20,
                ..Hyperparams::default()
            },
            ..SimConfig::default()
        }
    }

    fn constant_draws(truth: &Truth, ops: &OperatorSet, n: usize, model: ModelKind) -> PosteriorDraws {
        let scores = DMatrix::from_fn(n, truth.s.len(), |_, c| truth.s[c]);
        let weights = DMatrix::from_fn(n, truth.w.len(), |_, c| truth.w[c]);
        PosteriorDraws::from_parameters(
            model,
            Hyperparams::default(),
            default_labels(truth.s.len()),
            scores,
            weights,
            vec![1.0; n],
            vec![1.0; n],
            ops,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        for bad in [
            SimConfig { sparsity: 1.5, ..SimConfig::default() },
            SimConfig { replications: 0, ..SimConfig::default() },
            SimConfig { trials: Trials::Range { lo: 0, hi: 5 }, ..SimConfig::default() },
            SimConfig { trials: Trials::Range { lo: 9, hi: 5 }, ..SimConfig::default() },
            SimConfig { n_entities: 2, ..SimConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn active_weight_counts() {
        let c = |sp| SimConfig { sparsity: sp, ..SimConfig::default() };
        assert_eq!(c(0.0).active_weights(36), 36);
        assert_eq!(c(0.25).active_weights(36), 27);
        assert_eq!(c(0.5).active_weights(36), 18);
        assert_eq!(c(0.75).active_weights(36), 9);
        assert_eq!(c(1.0).active_weights(36), 0);
        assert_eq!(c(0.9).active_weights(10), 1);
    }

    #[test]
    fn synthetic_sparsity_endpoints() {
        let ops = OperatorSet::new(6).unwrap();
        let (t, _) = generate_synthetic(&cfg(6, 1.0), &ops, 0).unwrap();
        assert!(t.w.iter().all(|&v| v == 0.0));
        assert!(t.m_curl.iter().all(|&v| v == 0.0));
        assert_eq!(t.m, t.m_grad);

        let (t, data) = generate_synthetic(&cfg(6, 0.0), &ops, 0).unwrap();
        assert!(t.w.iter().all(|&v| v != 0.0));
        assert!(t.s.sum().abs() < 1e-12);
        assert!(t.m_grad.dot(&t.m_curl).abs() < 1e-10);
        assert_eq!(data.trials(), &[100u32; 15][..]);

        let (a, da) = generate_synthetic(&cfg(6, 0.5), &ops, 3).unwrap();
        let (b, db) = generate_synthetic(&cfg(6, 0.5), &ops, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(da, db);
        assert_eq!(a.w.iter().filter(|&&v| v != 0.0).count(), 5);
        let (c, _) = generate_synthetic(&cfg(6, 0.5), &ops, 4).unwrap();
        assert_ne!(a.s, c.s);
    }

    #[test]
    fn imbalanced_trials_stay_in_range() {
        let ops = OperatorSet::new(8).unwrap();
        let c = SimConfig { trials: Trials::Range { lo: 5, hi: 100 }, ..cfg(8, 0.5) };
        let (_, data) = generate_synthetic(&c, &ops, 1).unwrap();
        assert!(data.trials().iter().all(|&n| (5..=100).contains(&n)));
        let distinct: std::collections::BTreeSet<_> = data.trials().iter().collect();
        assert!(distinct.len() > 5);
    }

    #[test]
    fn win_fraction_converges_to_truth() {
        let ops = OperatorSet::new(4).unwrap();
        let c = SimConfig { trials: Trials::Constant(100_000), ..cfg(4, 0.0) };
        let (t, data) = generate_synthetic(&c, &ops, 0).unwrap();
        for e in 0..ops.n_edges() {
            let p = logistic(t.m[e]);
            let frac = data.wins()[e] as f64 / 1e5;
            let se = (p * (1.0 - p) / 1e5).sqrt();
            assert!((frac - p).abs() < 5.0 * se);
        }
    }

    #[test]
    fn metrics_at_the_truth() {
        let ops = OperatorSet::new(5).unwrap();
        let (t, _) = generate_synthetic(&cfg(5, 0.5), &ops, 0).unwrap();
        let d = constant_draws(&t, &ops, 4, ModelKind::Bibt);
        let mse = compute_mse(&t, &d).unwrap();
        assert!(mse.m < 1e-24 && mse.grad < 1e-24 && mse.curl < 1e-24);
        assert_eq!(compute_recovery_accuracy(&t, &d).unwrap().accuracy, 1.0);
        for cov in compute_coverage(&t, &d, &COVERAGE_LEVELS).unwrap() {
            assert_eq!((cov.m, cov.grad, cov.curl), (1.0, 1.0, Some(1.0)));
        }
    }

    #[test]
    fn constant_offset_and_sign_flip() {
        let ops = OperatorSet::new(5).unwrap();
        let (t, _) = generate_synthetic(&cfg(5, 0.0), &ops, 1).unwrap();
        let d = constant_draws(&t, &ops, 3, ModelKind::Bibt);
        let mut shifted = d.clone();
        shifted.matchup.add_scalar_mut(0.3);
        assert!((compute_mse(&t, &shifted).unwrap().m - 0.09).abs() < 1e-12);

        let neg = Truth {
            s: -&t.s,
            w: -&t.w,
            m: -&t.m,
            m_grad: -&t.m_grad,
            m_curl: -&t.m_curl,
        };
        assert_eq!(compute_recovery_accuracy(&neg, &d).unwrap().accuracy, 0.0);
    }

    #[test]
    fn perfect_detector_and_empty_positive_set() {
        let ops = OperatorSet::new(5).unwrap();
        let (t, _) = generate_synthetic(&cfg(5, 0.0), &ops, 2).unwrap();
        let d = constant_draws(&t, &ops, 3, ModelKind::Bibt);
        for det in compute_detection(&t, &d, &DEFAULT_DETECTION_LEVELS).unwrap() {
            assert_eq!((det.recall, det.precision, det.f1), (Some(1.0), Some(1.0), Some(1.0)));
        }
        let (t1, _) = generate_synthetic(&cfg(5, 1.0), &ops, 2).unwrap();
        let d1 = constant_draws(&t1, &ops, 3, ModelKind::Bibt);
        let det = compute_detection(&t1, &d1, &[0.9]).unwrap()[0];
        assert_eq!(det.positives, 0);
        assert_eq!((det.recall, det.f1), (None, None));
    }

    #[test]
    fn baseline_has_no_curl_coverage() {
        let ops = OperatorSet::new(4).unwrap();
        let (t, _) = generate_synthetic(&cfg(4, 1.0), &ops, 0).unwrap();
        let d = constant_draws(&t, &ops, 3, ModelKind::Baseline);
        assert!(compute_coverage(&t, &d, &[0.9]).unwrap()[0].curl.is_none());
    }

    #[test]
    fn study_is_deterministic_and_jobs_invariant() {
        let c = cfg(4, 0.5);
        let a = run_study(&c, Some(1)).unwrap();
        let b = run_study(&c, Some(3)).unwrap();
        let strip = |r: &StudyReport| -> Vec<(Mse, Vec<Coverage>)> {
            r.replications
                .iter()
                .map(|x| {
                    let m = x.bibt.metrics().unwrap();
                    (m.mse, m.coverage.clone())
                })
                .collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.bibt.succeeded, 2);
        assert_eq!(a.baseline.as_ref().unwrap().succeeded, 2);
        assert!(a.baseline.as_ref().unwrap().detection.is_empty());
    }

    #[test]
    fn single_replication_report_equals_its_metrics() {
        let c = SimConfig { replications: 1, ..cfg(4, 0.5) };
        let r = run_study(&c, Some(1)).unwrap();
        let m = r.replications[0].bibt.metrics().unwrap();
        assert_eq!(r.bibt.mse.unwrap(), m.mse);
        assert_eq!(r.bibt.accuracy, Some(m.accuracy.accuracy));
        assert_eq!(r.bibt.coverage[0].m, Some(m.coverage[0].m));
    }
}
