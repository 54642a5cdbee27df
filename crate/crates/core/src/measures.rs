//! Posterior functionals: the global intransitivity ratio, local vorticity,
//! and per-component summaries with equal-tailed credible intervals.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complex::{curl_apply, ComplexIndex, EdgeFlow, OperatorSet, TriangleFlow};
use crate::error::{Error, Result};
use crate::sampler::PosteriorDraws;

pub const DEFAULT_LEVELS: [f64; 4] = [0.025, 0.05, 0.95, 0.975];

/// Triangles processed per block when summarizing vorticity, to bound memory
/// at `n_draws * BLOCK` values.
const VORTICITY_BLOCK: usize = 256;

/// `||M_curl||^2 / (||M_grad||^2 + ||M_curl||^2)`, or 0 when both vanish.
pub fn global_intransitivity(grad: &EdgeFlow, curl: &EdgeFlow) -> f64 {
    ratio(grad.norm_squared(), curl.norm_squared())
}

fn ratio(g: f64, c: f64) -> f64 {
    let total = g + c;
    if total > 0.0 {
        (c / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// One value of the global measure per retained draw.
pub fn global_measure_trace(draws: &PosteriorDraws) -> Vec<f64> {
    (0..draws.n_draws())
        .map(|r| {
            ratio(
                draws.grad_flow.row(r).norm_squared(),
                draws.curl_flow.row(r).norm_squared(),
            )
        })
        .collect()
}

/// `C_ijk = M_ij + M_jk + M_ki` on every triangle.
pub fn local_vorticity(m: &EdgeFlow, idx: &ComplexIndex) -> Result<TriangleFlow> {
    curl_apply(m, idx)
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, p))
}

/// Equal-tailed interval at credibility `level`, e.g. 0.95 gives the
/// 2.5% and 97.5% quantiles.
pub fn credible_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - level);
    (quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    GlobalMeasure,
    Vorticity,
    Matchup,
    GradFlow,
    CurlFlow,
    Scores,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::GlobalMeasure,
        Quantity::Vorticity,
        Quantity::Matchup,
        Quantity::GradFlow,
        Quantity::CurlFlow,
        Quantity::Scores,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::GlobalMeasure => "global_measure",
            Quantity::Vorticity => "vorticity",
            Quantity::Matchup => "matchup",
            Quantity::GradFlow => "grad_flow",
            Quantity::CurlFlow => "curl_flow",
            Quantity::Scores => "scores",
        }
    }
}

/// Per-component posterior summary of one quantity.
///
/// `quantiles` maps a level (formatted as in the request, e.g. `"0.975"`) to
/// one value per component. `flags[c]` is true when the 95% equal-tailed
/// interval of component `c` excludes zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub quantity: Quantity,
    pub component_labels: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub quantiles: BTreeMap<String, Vec<f64>>,
    pub flags: Vec<bool>,
    pub flagged_count: usize,
    pub flagged_fraction: f64,
}

impl MeasureSummary {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn quantile(&self, level: f64) -> Option<&[f64]> {
        self.quantiles.get(&level_key(level)).map(Vec::as_slice)
    }
}

pub fn level_key(level: f64) -> String {
    format!("{level}")
}

fn validate_levels(levels: &[f64]) -> Result<()> {
    match levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        Some(l) => Err(Error::InvalidInput(format!(
            "quantile level {l} outside [0, 1]"
        ))),
        None => Ok(()),
    }
}

struct Accumulator {
    levels: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    quantiles: Vec<Vec<f64>>,
    flags: Vec<bool>,
    scratch: Vec<f64>,
}

impl Accumulator {
    fn new(levels: &[f64], n_components: usize) -> Self {
        Self {
            levels: levels.to_vec(),
            mean: Vec::with_capacity(n_components),
            sd: Vec::with_capacity(n_components),
            quantiles: vec![Vec::with_capacity(n_components); levels.len()],
            flags: Vec::with_capacity(n_components),
            scratch: Vec::new(),
        }
    }

    fn push<'a>(&mut self, column: impl Iterator<Item = &'a f64>) {
        self.scratch.clear();
        self.scratch.extend(column);
        let n = self.scratch.len() as f64;
        let mean = self.scratch.iter().sum::<f64>() / n;
        let ss: f64 = self.scratch.iter().map(|v| (v - mean) * (v - mean)).sum();
        self.mean.push(mean);
        self.sd.push((ss / (n - 1.0)).sqrt());
        self.scratch.sort_by(f64::total_cmp);
        for (q, &level) in self.quantiles.iter_mut().zip(&self.levels) {
            q.push(quantile_sorted(&self.scratch, level));
        }
        let (lo, hi) = credible_interval(&self.scratch, 0.95);
        self.flags.push(lo > 0.0 || hi < 0.0);
    }

    fn finish(self, quantity: Quantity, component_labels: Vec<String>) -> MeasureSummary {
        let flagged_count = self.flags.iter().filter(|&&f| f).count();
        let flagged_fraction = if self.flags.is_empty() {
            0.0
        } else {
            flagged_count as f64 / self.flags.len() as f64
        };
        MeasureSummary {
            quantity,
            component_labels,
            mean: self.mean,
            sd: self.sd,
            quantiles: self
                .levels
                .iter()
                .map(|&l| level_key(l))
                .zip(self.quantiles)
                .collect(),
            flags: self.flags,
            flagged_count,
            flagged_fraction,
        }
    }
}

pub fn edge_labels(idx: &ComplexIndex, labels: &[String]) -> Vec<String> {
    idx.edges()
        .iter()
        .map(|&(i, j)| format!("{}:{}", labels[i], labels[j]))
        .collect()
}

pub fn triangle_labels(idx: &ComplexIndex, labels: &[String]) -> Vec<String> {
    idx.triangles()
        .iter()
        .map(|&(i, j, k)| format!("{}:{}:{}", labels[i], labels[j], labels[k]))
        .collect()
}

fn summarize_columns(
    m: &DMatrix<f64>,
    quantity: Quantity,
    labels: Vec<String>,
    levels: &[f64],
) -> MeasureSummary {
    let mut acc = Accumulator::new(levels, m.ncols());
    for col in m.column_iter() {
        acc.push(col.iter());
    }
    acc.finish(quantity, labels)
}

/// Summarizes one posterior quantity component-wise.
pub fn summarize(
    draws: &PosteriorDraws,
    ops: &OperatorSet,
    quantity: Quantity,
    levels: &[f64],
) -> Result<MeasureSummary> {
    if draws.n_draws() < 2 {
        return Err(Error::InvalidInput(format!(
            "summaries need at least 2 draws, got {}",
            draws.n_draws()
        )));
    }
    validate_levels(levels)?;
    crate::error::check_len("entities", ops.n_entities(), draws.n_entities())?;
    let idx = ops.index();
    let labels = &draws.labels;
    Ok(match quantity {
        Quantity::GlobalMeasure => {
            let trace = DMatrix::from_column_slice(draws.n_draws(), 1, &global_measure_trace(draws));
            summarize_columns(&trace, quantity, vec!["I".into()], levels)
        }
        Quantity::Scores => summarize_columns(&draws.scores, quantity, labels.clone(), levels),
        Quantity::Matchup => summarize_columns(&draws.matchup, quantity, edge_labels(idx, labels), levels),
        Quantity::GradFlow => {
            summarize_columns(&draws.grad_flow, quantity, edge_labels(idx, labels), levels)
        }
        Quantity::CurlFlow => {
            summarize_columns(&draws.curl_flow, quantity, edge_labels(idx, labels), levels)
        }
        Quantity::Vorticity => {
            let curl = ops.curl();
            let n_tri = curl.nrows();
            let mut acc = Accumulator::new(levels, n_tri);
            let mut start = 0;
            while start < n_tri {
                let len = VORTICITY_BLOCK.min(n_tri - start);
                let block = &draws.matchup * curl.rows(start, len).transpose();
                for col in block.column_iter() {
                    acc.push(col.iter());
                }
                start += len;
            }
            acc.finish(quantity, triangle_labels(idx, labels))
        }
    })
}

/// Summaries of every quantity, in the order of [`Quantity::ALL`].
pub fn summarize_all(
    draws: &PosteriorDraws,
    ops: &OperatorSet,
    levels: &[f64],
) -> Result<Vec<MeasureSummary>> {
    Quantity::ALL
        .iter()
        .map(|&q| summarize(draws, ops, q, levels))
        .collect()
}

/// One row of the ranked vorticity table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriadSummary {
    pub triangle: usize,
    pub entities: (usize, usize, usize),
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub lower95: f64,
    pub upper95: f64,
    pub excludes_zero: bool,
}

/// Triads ordered by decreasing `|posterior mean|`, ties in lexicographic
/// triangle order. `limit = None` keeps all.
///
/// `summary` must be a vorticity summary; its 95% interval is recomputed from
/// the `0.025`/`0.975` quantiles when present and otherwise from the flags.
pub fn ranked_triads(
    summary: &MeasureSummary,
    idx: &ComplexIndex,
    limit: Option<usize>,
) -> Result<Vec<TriadSummary>> {
    if summary.quantity != Quantity::Vorticity {
        return Err(Error::InvalidInput(format!(
            "ranked triads need a vorticity summary, got {}",
            summary.quantity.as_str()
        )));
    }
    crate::error::check_len("triangles", idx.n_triangles(), summary.len())?;
    let lower = summary.quantile(0.025);
    let upper = summary.quantile(0.975);
    let mut order: Vec<usize> = (0..summary.len()).collect();
    order.sort_by(|&a, &b| {
        summary.mean[b]
            .abs()
            .total_cmp(&summary.mean[a].abs())
            .then(a.cmp(&b))
    });
    order.truncate(limit.unwrap_or(usize::MAX));
    Ok(order
        .into_iter()
        .map(|t| TriadSummary {
            triangle: t,
            entities: idx.triangles()[t],
            label: summary.component_labels[t].clone(),
            mean: summary.mean[t],
            sd: summary.sd[t],
            lower95: lower.map_or(f64::NAN, |q| q[t]),
            upper95: upper.map_or(f64::NAN, |q| q[t]),
            excludes_zero: summary.flags[t],
        })
        .collect())
}

/// Posterior mean edge flows, in canonical edge order.
pub struct MeanFlows {
    pub grad: DVector<f64>,
    pub curl: DVector<f64>,
    pub total: DVector<f64>,
}

pub fn mean_flows(draws: &PosteriorDraws) -> MeanFlows {
    MeanFlows {
        grad: draws.mean_grad_flow(),
        curl: draws.mean_curl_flow(),
        total: draws.mean_matchup(),
    }
}
