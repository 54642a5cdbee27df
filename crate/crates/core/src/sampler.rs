//! Gibbs sampler for the Bayesian intransitive Bradley-Terry model.
//!
//! The match-up on edge `(i, j)` is `M = G s + C^T H w`: a gradient flow from
//! centered scores `s` plus a curl flow from weights `w` in the orthonormal
//! curl basis `H`. Wins follow `y_ij ~ Bin(n_ij, sigmoid(M_ij))`.
//!
//! Priors: `s_i ~ N(0, sigma^2)` (centered after every draw),
//! `sigma^2 ~ IG(a_sigma, b_sigma)`, `w_l ~ N(0, tau^2 lambda_l^2)` with
//! half-Cauchy `tau` and `lambda_l` written as inverse-gamma mixtures through
//! auxiliaries `xi` and `nu_l`. Pólya-Gamma latents `omega_ij ~ PG(n_ij, M_ij)`
//! make the `s` and `w` conditionals Gaussian.
//!
//! One sweep updates, in order: `omega, s, sigma^2, w, lambda^2, tau^2, nu, xi`.
//! The transitive baseline keeps `w = 0` and runs only `omega, s, sigma^2`.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::complex::{EdgeFlow, OperatorSet};
use crate::error::{check_len, Error, Result};
use crate::polya_gamma::{pg_mean, PgMethod, PgParams, PolyaGammaOne};
use crate::seed::rng_from_seed;

/// Lower bound applied to every variance-like draw.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Aggregated binary comparison counts on the complete graph.
///
/// `wins[e]` counts wins of `i` over `j` on canonical edge `e = (i, j)`, `i < j`;
/// `trials[e]` counts games played. Pairs that never met have zero trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonData {
    labels: Vec<String>,
    wins: Vec<u32>,
    trials: Vec<u32>,
}

impl ComparisonData {
    pub fn new(labels: Vec<String>, wins: Vec<u32>, trials: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        let n_edges = n * n.saturating_sub(1) / 2;
        check_len("wins", n_edges, wins.len())?;
        check_len("trials", n_edges, trials.len())?;
        if let Some(e) = (0..n_edges).find(|&e| wins[e] > trials[e]) {
            return Err(Error::Data(format!(
                "edge {e}: wins {} exceed trials {}",
                wins[e], trials[e]
            )));
        }
        Ok(Self {
            labels,
            wins,
            trials,
        })
    }

    /// Data with no observed games and labels `1..=n`.
    pub fn empty(n_entities: usize) -> Self {
        let n_edges = n_entities * n_entities.saturating_sub(1) / 2;
        Self {
            labels: default_labels(n_entities),
            wins: vec![0; n_edges],
            trials: vec![0; n_edges],
        }
    }

    pub fn n_entities(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn wins(&self) -> &[u32] {
        &self.wins
    }

    pub fn trials(&self) -> &[u32] {
        &self.trials
    }

    /// `kappa_e = y_e - n_e / 2`.
    pub fn kappa(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.wins.len(),
            self.wins
                .iter()
                .zip(&self.trials)
                .map(|(&y, &n)| y as f64 - 0.5 * n as f64),
        )
    }
}

pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// MCMC settings and prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub pg_method: PgMethod,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            a_sigma: 0.5,
            b_sigma: 0.5,
            n_iterations: 10_000,
            burn_in: 2_000,
            thin: 1,
            seed: 0,
            pg_method: PgMethod::Exact,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_sigma > 0.0 && self.b_sigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "a_sigma and b_sigma must be positive, got {} and {}",
                self.a_sigma, self.b_sigma
            )));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::InvalidInput(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of draws kept after burn-in and thinning.
    pub fn retained_draws(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }
}

/// Which model a set of draws came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bibt,
    Baseline,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bibt => "bibt",
            ModelKind::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bibt" => Ok(ModelKind::Bibt),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        }
    }
}

/// Full parameter set of one Gibbs iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub s: DVector<f64>,
    pub sigma2: f64,
    pub w: DVector<f64>,
    pub lambda2: DVector<f64>,
    pub tau2: f64,
    pub nu: DVector<f64>,
    pub xi: f64,
    pub omega: DVector<f64>,
    pub kappa: DVector<f64>,
}

impl SamplerState {
    /// Neutral starting point: zero scores and weights, unit scales, and
    /// `omega` at its prior mean `n_ij / 4`.
    pub fn initial(data: &ComparisonData, ops: &OperatorSet) -> Result<Self> {
        check_len("entities", ops.n_entities(), data.n_entities())?;
        let k = ops.n_weights();
        let omega = DVector::from_iterator(
            ops.n_edges(),
            data.trials().iter().map(|&n| pg_mean(PgParams { b: n, c: 0.0 })),
        );
        Ok(Self {
            s: DVector::zeros(ops.n_entities()),
            sigma2: 1.0,
            w: DVector::zeros(k),
            lambda2: DVector::from_element(k, 1.0),
            tau2: 1.0,
            nu: DVector::from_element(k, 1.0),
            xi: 1.0,
            omega,
            kappa: data.kappa(),
        })
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        let scalar_ok = |v: f64| v.is_finite() && v > 0.0;
        let all_finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !all_finite(&self.s) {
            Some("s")
        } else if !scalar_ok(self.sigma2) {
            Some("sigma2")
        } else if !all_finite(&self.w) {
            Some("w")
        } else if !self.lambda2.iter().all(|&v| scalar_ok(v)) {
            Some("lambda2")
        } else if !scalar_ok(self.tau2) {
            Some("tau2")
        } else if !self.nu.iter().all(|&v| scalar_ok(v)) {
            Some("nu")
        } else if !scalar_ok(self.xi) {
            Some("xi")
        } else if !self.omega.iter().all(|&v| v.is_finite() && v >= 0.0) {
            Some("omega")
        } else {
            None
        }
    }
}

/// `M = G s + C^T H w` for the current state.
pub fn compute_matchup(state: &SamplerState, ops: &OperatorSet) -> Result<EdgeFlow> {
    check_len("score vector", ops.n_entities(), state.s.len())?;
    check_len("curl weights", ops.n_weights(), state.w.len())?;
    Ok(EdgeFlow(ops.grad() * &state.s + ops.curl_flow_basis() * &state.w))
}

/// `IG(shape, scale)` as `scale / Gamma(shape, 1)`.
fn inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = if shape == 1.0 {
        Exp1.sample(rng)
    } else {
        Gamma::new(shape, 1.0)
            .expect("inverse-gamma shape is positive")
            .sample(rng)
    };
    scale / g
}

/// Draws from `N(P^{-1} b, P^{-1})` given the precision `P` and `b`.
fn gaussian_from_precision<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    rhs: &DVector<f64>,
    rng: &mut R,
    what: &str,
) -> std::result::Result<DVector<f64>, String> {
    let dim = rhs.len();
    let chol = Cholesky::new(precision)
        .ok_or_else(|| format!("{what} precision matrix is not positive definite"))?;
    let mean = chol.solve(rhs);
    let z = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)));
    let noise = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| format!("{what} Cholesky factor is singular"))?;
    Ok(mean + noise)
}

/// The Gibbs kernel for one data set: holds the data, operators and settings
/// and exposes each full-conditional update.
pub struct GibbsKernel<'a> {
    data: &'a ComparisonData,
    ops: &'a OperatorSet,
    hp: &'a Hyperparams,
}

impl<'a> GibbsKernel<'a> {
    pub fn new(data: &'a ComparisonData, ops: &'a OperatorSet, hp: &'a Hyperparams) -> Result<Self> {
        hp.validate()?;
        check_len("entities", ops.n_entities(), data.n_entities())?;
        Ok(Self { data, ops, hp })
    }

    /// `omega_e ~ PG(n_e, M_e)` on every edge with games; other edges stay at 0.
    pub fn update_omega<R: Rng + ?Sized>(&self, state: &mut SamplerState, rng: &mut R) {
        let grad = self.ops.grad();
        let curl = self.ops.curl_flow_basis();
        let has_curl = state.w.iter().any(|&v| v != 0.0);
        for (e, &n) in self.data.trials().iter().enumerate() {
            if n == 0 {
                state.omega[e] = 0.0;
                continue;
            }
            let (i, j) = self.ops.index().edges()[e];
            let mut m = state.s[i] - state.s[j];
            if has_curl {
                m += curl.row(e).dot(&state.w.transpose());
            }
            debug_assert_eq!(grad[(e, i)], 1.0);
            state.omega[e] = match self.hp.pg_method {
                PgMethod::GaussianAbove(t) if n > t => {
                    crate::polya_gamma::pg_draw_with(PgParams { b: n, c: m }, self.hp.pg_method, rng)
                }
                _ => {
                    let unit = PolyaGammaOne::new(m);
                    (0..n).map(|_| unit.sample(rng)).sum()
                }
            };
        }
    }

    /// `s ~ N(A_s B_s, A_s)` with `A_s = (I / sigma^2 + G^T Omega G)^{-1}` and
    /// `B_s = G^T (kappa - Omega C^T H w)`, then centered.
    pub fn update_s<R: Rng + ?Sized>(
        &self,
        state: &mut SamplerState,
        rng: &mut R,
    ) -> std::result::Result<(), String> {
        let n = self.ops.n_entities();
        let curl_part = self.ops.curl_flow_basis() * &state.w;
        let mut precision = DMatrix::from_diagonal_element(n, n, 1.0 / state.sigma2);
        let mut rhs = DVector::zeros(n);
        for (e, &(i, j)) in self.ops.index().edges().iter().enumerate() {
            let om = state.omega[e];
            precision[(i, i)] += om;
            precision[(j, j)] += om;
            precision[(i, j)] -= om;
            precision[(j, i)] -= om;
            let r = state.kappa[e] - om * curl_part[e];
            rhs[i] += r;
            rhs[j] -= r;
        }
        let mut s = gaussian_from_precision(precision, &rhs, rng, "score")?;
        let mean = s.mean();
        s.add_scalar_mut(-mean);
        state.s = s;
        Ok(())
    }

    /// `sigma^2 ~ IG(a_sigma + N/2, b_sigma + s^T s / 2)`.
    pub fn update_sigma2<R: Rng + ?Sized>(&self, state: &mut SamplerState, rng: &mut R) {
        let shape = self.hp.a_sigma + 0.5 * state.s.len() as f64;
        let scale = self.hp.b_sigma + 0.5 * state.s.norm_squared();
        state.sigma2 = inverse_gamma(shape, scale, rng).max(SCALE_FLOOR);
    }

    /// `w ~ N(A_w B_w, A_w)` with `A_w = (W^{-1} + B^T Omega B)^{-1}`,
    /// `B_w = B^T (kappa - Omega G s)`, `B = C^T H`, `W = diag(tau^2 lambda^2)`.
    pub fn update_w<R: Rng + ?Sized>(
        &self,
        state: &mut SamplerState,
        rng: &mut R,
    ) -> std::result::Result<(), String> {
        let basis = self.ops.curl_flow_basis();
        let k = basis.ncols();
        if k == 0 {
            return Ok(());
        }
        let mut weighted = basis.clone();
        let mut resid = DVector::zeros(basis.nrows());
        for (e, &(i, j)) in self.ops.index().edges().iter().enumerate() {
            let om = state.omega[e];
            weighted.row_mut(e).scale_mut(om.sqrt());
            resid[e] = state.kappa[e] - om * (state.s[i] - state.s[j]);
        }
        let mut precision = weighted.tr_mul(&weighted);
        for l in 0..k {
            precision[(l, l)] += 1.0 / (state.tau2 * state.lambda2[l]);
        }
        let rhs = basis.tr_mul(&resid);
        state.w = gaussian_from_precision(precision, &rhs, rng, "curl weight")?;
        Ok(())
    }

    /// Horseshoe scales in order `lambda^2, tau^2, nu, xi`.
    pub fn update_shrinkage<R: Rng + ?Sized>(&self, state: &mut SamplerState, rng: &mut R) {
        gibbs_update_shrinkage(state, rng);
    }

    /// One full BIBT sweep.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut SamplerState,
        rng: &mut R,
    ) -> std::result::Result<(), String> {
        self.update_omega(state, rng);
        self.update_s(state, rng)?;
        self.update_sigma2(state, rng);
        self.update_w(state, rng)?;
        self.update_shrinkage(state, rng);
        Ok(())
    }

    /// One baseline sweep (`w` stays at zero).
    pub fn sweep_baseline<R: Rng + ?Sized>(
        &self,
        state: &mut SamplerState,
        rng: &mut R,
    ) -> std::result::Result<(), String> {
        self.update_omega(state, rng);
        self.update_s(state, rng)?;
        self.update_sigma2(state, rng);
        Ok(())
    }
}

/// Horseshoe scale updates given the current `w`:
/// `lambda_l^2 ~ IG(1, 1/nu_l + w_l^2 / (2 tau^2))`,
/// `tau^2 ~ IG((K+1)/2, 1/xi + sum_l w_l^2 / (2 lambda_l^2))`,
/// `nu_l ~ IG(1, 1 + 1/lambda_l^2)`, `xi ~ IG(1, 1 + 1/tau^2)`.
pub fn gibbs_update_shrinkage<R: Rng + ?Sized>(state: &mut SamplerState, rng: &mut R) {
    let k = state.w.len();
    if k == 0 {
        return;
    }
    for l in 0..k {
        let scale = 1.0 / state.nu[l] + state.w[l] * state.w[l] / (2.0 * state.tau2);
        state.lambda2[l] = inverse_gamma(1.0, scale, rng).max(SCALE_FLOOR);
    }
    let ratio: f64 = (0..k)
        .map(|l| state.w[l] * state.w[l] / state.lambda2[l])
        .sum();
    state.tau2 = inverse_gamma(0.5 * (k as f64 + 1.0), 1.0 / state.xi + 0.5 * ratio, rng)
        .max(SCALE_FLOOR);
    for l in 0..k {
        state.nu[l] = inverse_gamma(1.0, 1.0 + 1.0 / state.lambda2[l], rng);
    }
    state.xi = inverse_gamma(1.0, 1.0 + 1.0 / state.tau2, rng);
}

/// Retained posterior draws with the derived edge flows.
///
/// Matrices hold one draw per row, so each column is the trace of one
/// component. `matchup` is computed as `grad_flow + curl_flow` entrywise.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub model: ModelKind,
    pub hyperparams: Hyperparams,
    pub labels: Vec<String>,
    pub scores: DMatrix<f64>,
    pub weights: DMatrix<f64>,
    pub sigma2: Vec<f64>,
    pub tau2: Vec<f64>,
    pub grad_flow: DMatrix<f64>,
    pub curl_flow: DMatrix<f64>,
    pub matchup: DMatrix<f64>,
    pub elapsed_seconds: f64,
}

impl PosteriorDraws {
    /// Rebuilds draws (and their flows) from stored parameter traces.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parameters(
        model: ModelKind,
        hyperparams: Hyperparams,
        labels: Vec<String>,
        scores: DMatrix<f64>,
        weights: DMatrix<f64>,
        sigma2: Vec<f64>,
        tau2: Vec<f64>,
        ops: &OperatorSet,
    ) -> Result<Self> {
        let n_draws = scores.nrows();
        check_len("entities", ops.n_entities(), scores.ncols())?;
        check_len("entity labels", ops.n_entities(), labels.len())?;
        check_len("curl weights", ops.n_weights(), weights.ncols())?;
        check_len("weight draws", n_draws, weights.nrows())?;
        check_len("sigma2 draws", n_draws, sigma2.len())?;
        check_len("tau2 draws", n_draws, tau2.len())?;
        let grad_flow = &scores * ops.grad().transpose();
        let curl_flow = &weights * ops.curl_flow_basis().transpose();
        let matchup = &grad_flow + &curl_flow;
        Ok(Self {
            model,
            hyperparams,
            labels,
            scores,
            weights,
            sigma2,
            tau2,
            grad_flow,
            curl_flow,
            matchup,
            elapsed_seconds: 0.0,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_entities(&self) -> usize {
        self.scores.ncols()
    }

    pub fn mean_matchup(&self) -> DVector<f64> {
        column_means(&self.matchup)
    }

    pub fn mean_grad_flow(&self) -> DVector<f64> {
        column_means(&self.grad_flow)
    }

    pub fn mean_curl_flow(&self) -> DVector<f64> {
        column_means(&self.curl_flow)
    }

    pub fn mean_scores(&self) -> DVector<f64> {
        column_means(&self.scores)
    }
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Runs the BIBT Gibbs sampler and keeps post-burn-in, thinned draws.
pub fn run_chain(
    data: &ComparisonData,
    hp: &Hyperparams,
    ops: &OperatorSet,
) -> Result<PosteriorDraws> {
    run(data, hp, ops, ModelKind::Bibt)
}

/// Runs the transitive baseline: identical score and variance updates with
/// the curl weights pinned at zero.
pub fn run_baseline_chain(
    data: &ComparisonData,
    hp: &Hyperparams,
    ops: &OperatorSet,
) -> Result<PosteriorDraws> {
    run(data, hp, ops, ModelKind::Baseline)
}

fn run(
    data: &ComparisonData,
    hp: &Hyperparams,
    ops: &OperatorSet,
    model: ModelKind,
) -> Result<PosteriorDraws> {
    let start = Instant::now();
    let kernel = GibbsKernel::new(data, ops, hp)?;
    let mut state = SamplerState::initial(data, ops)?;
    let mut rng = rng_from_seed(hp.seed);

    let n_keep = hp.retained_draws();
    let n = ops.n_entities();
    let k = ops.n_weights();
    let mut scores = DMatrix::zeros(n_keep, n);
    let mut weights = DMatrix::zeros(n_keep, k);
    let mut sigma2 = Vec::with_capacity(n_keep);
    let mut tau2 = Vec::with_capacity(n_keep);

    let mut kept = 0;
    for iter in 0..hp.n_iterations {
        let step = match model {
            ModelKind::Bibt => kernel.sweep(&mut state, &mut rng),
            ModelKind::Baseline => kernel.sweep_baseline(&mut state, &mut rng),
        };
        step.map_err(|reason| Error::Numerical {
            iteration: iter,
            reason,
        })?;
        if let Some(what) = state.first_non_finite() {
            return Err(Error::Numerical {
                iteration: iter,
                reason: format!("non-finite or non-positive value in {what}"),
            });
        }
        if iter >= hp.burn_in && (iter + 1 - hp.burn_in).is_multiple_of(hp.thin) && kept < n_keep {
            scores.set_row(kept, &state.s.transpose());
            weights.set_row(kept, &state.w.transpose());
            sigma2.push(state.sigma2);
            tau2.push(state.tau2);
            kept += 1;
        }
    }
    debug_assert_eq!(kept, n_keep);

    let mut draws = PosteriorDraws::from_parameters(
        model,
        hp.clone(),
        data.labels().to_vec(),
        scores,
        weights,
        sigma2,
        tau2,
        ops,
    )?;
    draws.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::grad_apply;
    use crate::seed::rng_from_seed;

    fn small_hp(iters: usize, burn: usize, seed: u64) -> Hyperparams {
        Hyperparams {
            n_iterations: iters,
            burn_in: burn,
            seed,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn data_validation() {
        let labels = default_labels(3);
        assert!(ComparisonData::new(labels.clone(), vec![1, 2, 3], vec![2, 2, 3]).is_ok());
        assert!(ComparisonData::new(labels.clone(), vec![3, 0, 0], vec![2, 2, 3]).is_err());
        assert!(ComparisonData::new(labels, vec![0, 0], vec![1, 1]).is_err());
        let d = ComparisonData::new(default_labels(3), vec![3, 0, 1], vec![4, 2, 2]).unwrap();
        assert_eq!(d.kappa(), DVector::from_vec(vec![1.0, -1.0, 0.0]));
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        assert_eq!(Hyperparams::default().retained_draws(), 8000);
        let bad = [
            Hyperparams { a_sigma: 0.0, ..Default::default() },
            Hyperparams { burn_in: 10_000, ..Default::default() },
            Hyperparams { thin: 0, ..Default::default() },
        ];
        for hp in bad {
            assert!(hp.validate().is_err());
        }
        let hp = Hyperparams { n_iterations: 100, burn_in: 10, thin: 3, ..Default::default() };
        assert_eq!(hp.retained_draws(), 30);
    }

    #[test]
    fn matchup_examples() {
        let ops = OperatorSet::new(3).unwrap();
        let data = ComparisonData::empty(3);
        let mut state = SamplerState::initial(&data, &ops).unwrap();
        assert_eq!(compute_matchup(&state, &ops).unwrap().0, DVector::zeros(3));

        state.s = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let m = compute_matchup(&state, &ops).unwrap();
        assert_eq!(m, grad_apply(&state.s, ops.index()).unwrap());

        // Phi = (1) on the single triangle, i.e. w = H^T (1)
        state.w = ops.curl_basis().transpose() * DVector::from_vec(vec![1.0]);
        let m = compute_matchup(&state, &ops).unwrap();
        let expect = DVector::from_vec(vec![2.0, 1.0, 2.0]);
        assert!((m.0 - expect).amax() < 1e-12);
    }

    #[test]
    fn initial_state() {
        let ops = OperatorSet::new(4).unwrap();
        let data = ComparisonData::new(default_labels(4), vec![1, 0, 2, 0, 0, 3], vec![2, 0, 4, 1, 0, 8]).unwrap();
        let st = SamplerState::initial(&data, &ops).unwrap();
        assert_eq!(st.omega.as_slice(), &[0.5, 0.0, 1.0, 0.25, 0.0, 2.0]);
        assert_eq!(st.w.len(), 3);
        assert_eq!(st.sigma2, 1.0);
        assert!(SamplerState::initial(&ComparisonData::empty(5), &ops).is_err());
    }

    #[test]
    fn omega_zero_trials_stay_zero() {
        let ops = OperatorSet::new(4).unwrap();
        let data = ComparisonData::new(default_labels(4), vec![1, 0, 0, 0, 0, 0], vec![3, 0, 0, 0, 0, 0]).unwrap();
        let hp = Hyperparams::default();
        let kernel = GibbsKernel::new(&data, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&data, &ops).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            kernel.update_omega(&mut st, &mut rng);
            assert!(st.omega[0] > 0.0);
            assert!(st.omega.iter().skip(1).all(|&v| v == 0.0));
        }
        let empty = ComparisonData::empty(4);
        let kernel = GibbsKernel::new(&empty, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&empty, &ops).unwrap();
        kernel.update_omega(&mut st, &mut rng);
        assert!(st.omega.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn omega_mean_matches_pg_moment() {
        let ops = OperatorSet::new(3).unwrap();
        let data = ComparisonData::new(default_labels(3), vec![2, 1, 3], vec![4, 2, 6]).unwrap();
        let hp = Hyperparams::default();
        let kernel = GibbsKernel::new(&data, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&data, &ops).unwrap();
        st.s = DVector::from_vec(vec![1.0, -0.5, -0.5]);
        let m = compute_matchup(&st, &ops).unwrap();
        let mut rng = rng_from_seed(5);
        let reps = 20_000;
        let mut sums = [0.0; 3];
        for _ in 0..reps {
            kernel.update_omega(&mut st, &mut rng);
            for e in 0..3 {
                sums[e] += st.omega[e];
            }
        }
        for e in 0..3 {
            let p = PgParams { b: data.trials()[e], c: m.0[e] };
            let se = (crate::polya_gamma::pg_variance(p) / reps as f64).sqrt();
            assert!((sums[e] / reps as f64 - pg_mean(p)).abs() < 4.0 * se, "edge {e}");
        }
    }

    #[test]
    fn scores_are_centered_and_spread_like_projection() {
        // No data, sigma^2 fixed at 2: s ~ N(0, sigma^2 (I - 11^T/N)), so the
        // marginal variance of each s_i is sigma^2 (N - 1) / N.
        let ops = OperatorSet::new(5).unwrap();
        let data = ComparisonData::empty(5);
        let hp = Hyperparams::default();
        let kernel = GibbsKernel::new(&data, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&data, &ops).unwrap();
        st.sigma2 = 2.0;
        let mut rng = rng_from_seed(11);
        let reps = 40_000;
        let mut sum_sq = 0.0;
        for _ in 0..reps {
            kernel.update_s(&mut st, &mut rng).unwrap();
            assert!(st.s.sum().abs() < 1e-12);
            sum_sq += st.s[0] * st.s[0];
        }
        let var = sum_sq / reps as f64;
        let expect = 2.0 * 4.0 / 5.0;
        // sd of a chi-square variance estimate: expect * sqrt(2 / reps)
        assert!((var - expect).abs() < 4.0 * expect * (2.0 / reps as f64).sqrt());
    }

    #[test]
    fn sigma2_conditional_mean() {
        let ops = OperatorSet::new(6).unwrap();
        let data = ComparisonData::empty(6);
        let hp = Hyperparams::default();
        let kernel = GibbsKernel::new(&data, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&data, &ops).unwrap();
        let mut rng = rng_from_seed(2);
        // s = 0: IG((1+N)/2, 1/2) with mean 0.5 / ((1 + N)/2 - 1) = 0.2 for N = 6
        let reps = 100_000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| {
                kernel.update_sigma2(&mut st, &mut rng);
                st.sigma2
            })
            .collect();
        assert!(draws.iter().all(|&v| v > 0.0));
        let mean = draws.iter().sum::<f64>() / reps as f64;
        // IG(3.5, 0.5) variance = 0.2^2 / 1.5
        let se = (0.04f64 / 1.5 / reps as f64).sqrt();
        assert!((mean - 0.2).abs() < 4.0 * se, "mean {mean}");

        // larger ||s|| moves sigma^2 up
        st.s = DVector::from_element(6, 2.0);
        let big: f64 = (0..2000)
            .map(|_| {
                kernel.update_sigma2(&mut st, &mut rng);
                st.sigma2
            })
            .sum::<f64>()
            / 2000.0;
        assert!(big > 2.0 * mean);
    }

    #[test]
    fn tiny_global_scale_shrinks_weights_to_zero() {
        let ops = OperatorSet::new(4).unwrap();
        let data = ComparisonData::new(default_labels(4), vec![40, 10, 70, 5, 50, 60], vec![80; 6]).unwrap();
        let hp = Hyperparams::default();
        let kernel = GibbsKernel::new(&data, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&data, &ops).unwrap();
        st.tau2 = 1e-12;
        let mut rng = rng_from_seed(3);
        kernel.update_omega(&mut st, &mut rng);
        kernel.update_w(&mut st, &mut rng).unwrap();
        assert!(st.w.amax() < 1e-5);
        assert_eq!(st.w.len(), 3);
    }

    #[test]
    fn shrinkage_with_zero_weights_draws_lambda_from_ig_one() {
        let mut st = SamplerState::initial(&ComparisonData::empty(4), &OperatorSet::new(4).unwrap()).unwrap();
        st.nu = DVector::from_element(3, 0.5);
        let mut rng = rng_from_seed(8);
        let reps = 50_000;
        let mut below = 0usize;
        for _ in 0..reps {
            st.nu.fill(0.5);
            gibbs_update_shrinkage(&mut st, &mut rng);
            assert!(st.lambda2.iter().all(|&v| v > 0.0) && st.tau2 > 0.0);
            assert!(st.nu.iter().all(|&v| v > 0.0) && st.xi > 0.0);
            // lambda^2 ~ IG(1, 1/nu = 2): P(lambda^2 <= 2) = exp(-1)
            if st.lambda2[0] <= 2.0 {
                below += 1;
            }
        }
        let p = below as f64 / reps as f64;
        let target = (-1.0f64).exp();
        assert!((p - target).abs() < 4.0 * (target * (1.0 - target) / reps as f64).sqrt());
    }

    #[test]
    fn chain_is_deterministic_and_centered() {
        let ops = OperatorSet::new(4).unwrap();
        let data = ComparisonData::new(default_labels(4), vec![6, 3, 8, 2, 5, 7], vec![10; 6]).unwrap();
        let hp = small_hp(300, 100, 42);
        let a = run_chain(&data, &hp, &ops).unwrap();
        let b = run_chain(&data, &hp, &ops).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.n_draws(), 200);
        for r in 0..a.n_draws() {
            assert!(a.scores.row(r).sum().abs() < 1e-12);
        }
        assert_eq!(a.matchup, &a.grad_flow + &a.curl_flow);
        let c = run_chain(&data, &small_hp(300, 100, 43), &ops).unwrap();
        assert_ne!(a.scores, c.scores);
    }

    #[test]
    fn thinning_keeps_expected_count() {
        let ops = OperatorSet::new(3).unwrap();
        let data = ComparisonData::new(default_labels(3), vec![1, 2, 3], vec![4, 4, 4]).unwrap();
        let hp = Hyperparams { n_iterations: 110, burn_in: 10, thin: 7, ..Default::default() };
        assert_eq!(run_chain(&data, &hp, &ops).unwrap().n_draws(), 14);
    }

    #[test]
    fn baseline_equals_bibt_with_frozen_weights() {
        let ops = OperatorSet::new(4).unwrap();
        let data = ComparisonData::new(default_labels(4), vec![6, 3, 8, 2, 5, 7], vec![10; 6]).unwrap();
        let hp = small_hp(50, 10, 9);
        let base = run_baseline_chain(&data, &hp, &ops).unwrap();
        assert_eq!(base.model, ModelKind::Baseline);
        assert!(base.curl_flow.iter().all(|&v| v == 0.0));

        let kernel = GibbsKernel::new(&data, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&data, &ops).unwrap();
        let mut rng = rng_from_seed(hp.seed);
        let mut manual = Vec::new();
        for it in 0..hp.n_iterations {
            kernel.update_omega(&mut st, &mut rng);
            kernel.update_s(&mut st, &mut rng).unwrap();
            kernel.update_sigma2(&mut st, &mut rng);
            if it >= hp.burn_in {
                manual.push(st.s.clone());
            }
        }
        for (r, s) in manual.iter().enumerate() {
            assert_eq!(base.scores.row(r).transpose(), *s);
        }
    }

    #[test]
    fn symmetric_data_gives_zero_mean_scores() {
        let ops = OperatorSet::new(4).unwrap();
        let data = ComparisonData::new(default_labels(4), vec![10; 6], vec![20; 6]).unwrap();
        let hp = small_hp(3000, 500, 17);
        let draws = run_baseline_chain(&data, &hp, &ops).unwrap();
        let means = draws.mean_scores();
        for (i, col) in draws.scores.column_iter().enumerate() {
            let sd = (col.iter().map(|v| (v - means[i]).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            // generous: draws are autocorrelated
            assert!(means[i].abs() < 10.0 * sd / (col.len() as f64).sqrt() + 0.02, "s_{i} mean {}", means[i]);
        }
    }

    #[test]
    fn model_kind_parsing() {
        assert_eq!("bibt".parse::<ModelKind>().unwrap(), ModelKind::Bibt);
        assert_eq!("baseline".parse::<ModelKind>().unwrap(), ModelKind::Baseline);
        assert!("icbt".parse::<ModelKind>().is_err());
    }
}
