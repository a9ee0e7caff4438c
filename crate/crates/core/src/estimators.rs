//! Policy-gradient estimators and their variance structure.
//!
//! Covers group-normalized advantages, (re)weighted trajectory gradients,
//! per-step variance contributions `β_t = E[‖J_t‖_F² (1 − e^{−H_t})]`, the
//! closed-form minimizer of the bound `Σ β_t w_t²` subject to `Σ w_t = T`,
//! entropy-only surrogates, and seeded Monte-Carlo variance measurement.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

use rand::SeedableRng;
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Environment;
use crate::policy::{
    derive_seed, enumerate_trajectories, exact_policy_gradient, exact_return_moments,
    sample_trajectory, score_vector, state_space_size, PolicyError, SoftmaxPolicy, Trajectory,
    ENUMERATION_LIMIT,
};
use crate::region::{PerRegion, RegionEntropy, RegionTag};
use crate::stats::{bootstrap_trace_ci, coordinate_variances, neumaier_sum};

/// Floor applied to β when surrogate weights must stay finite.
pub const BETA_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("group of {0} trajectories is too small (need at least 2)")]
    GroupTooSmall(usize),
    #[error("weight vector of length {weights} cannot cover a trajectory of length {steps}")]
    LengthMismatch { steps: usize, weights: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// `Â_i = (r_i − mean) / (std + δ)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64], delta: f64) -> Result<Vec<f64>, EstimatorError> {
    if rewards.len() < 2 {
        return Err(EstimatorError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + delta;
    Ok(rewards
        .iter()
        .map(|r| {
            let centered = r - mean;
            if centered == 0.0 {
                0.0
            } else {
                centered / denom
            }
        })
        .collect())
}

/// How advantages are formed for a sampled group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AdvantageMode {
    /// Standardized by the group's own mean and population std plus `delta`.
    Group { delta: f64 },
    /// Standardized by known population moments of the return.
    Population { mean: f64, std: f64 },
}

impl AdvantageMode {
    pub fn advantages(&self, rewards: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        match *self {
            AdvantageMode::Group { delta } => group_advantages(rewards, delta),
            AdvantageMode::Population { mean, std } => {
                if !(std > 0.0) {
                    return Err(EstimatorError::InvalidArgument(
                        "population std must be positive".into(),
                    ));
                }
                Ok(rewards.iter().map(|r| (r - mean) / std).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGroup {
    pub trajectories: Vec<Trajectory>,
    pub advantages: Vec<f64>,
    pub delta: f64,
}

impl TrajectoryGroup {
    pub fn new(trajectories: Vec<Trajectory>, delta: f64) -> Result<Self, EstimatorError> {
        let rewards: Vec<f64> = trajectories.iter().map(|t| t.reward).collect();
        let advantages = group_advantages(&rewards, delta)?;
        Ok(Self {
            trajectories,
            advantages,
            delta,
        })
    }

    pub fn with_advantages(
        trajectories: Vec<Trajectory>,
        advantages: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        if trajectories.len() != advantages.len() {
            return Err(EstimatorError::InvalidArgument(format!(
                "{} trajectories but {} advantages",
                trajectories.len(),
                advantages.len()
            )));
        }
        Ok(Self {
            trajectories,
            advantages,
            delta: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Per-step weights over a horizon of `T` steps with `Σ w_t = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(horizon: usize) -> Self {
        Self(vec![1.0; horizon])
    }

    /// Wraps weights after checking non-negativity and `Σ w = T` to a relative
    /// tolerance of 1e-9.
    pub fn new(w: Vec<f64>) -> Result<Self, EstimatorError> {
        if w.is_empty() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(EstimatorError::InvalidArgument(
                "weights must be finite and non-negative".into(),
            ));
        }
        let t = w.len() as f64;
        let s = neumaier_sum(w.iter().copied());
        if (s - t).abs() > 1e-9 * t {
            return Err(EstimatorError::InvalidArgument(format!(
                "weights sum to {s}, expected {t}"
            )));
        }
        Ok(Self(w))
    }

    /// Rescales arbitrary non-negative weights onto the feasible set.
    pub fn normalized(raw: &[f64]) -> Result<Self, EstimatorError> {
        let s = neumaier_sum(raw.iter().copied());
        if raw.is_empty() || !(s > 0.0) || raw.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(EstimatorError::InvalidArgument(
                "cannot normalize weights".into(),
            ));
        }
        let t = raw.len() as f64;
        Ok(Self(raw.iter().map(|x| t * x / s).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Â · Σ_t w_t J_tᵀ s_t` using the trajectory's recorded step distributions.
/// Without weights every step counts once.
pub fn trajectory_gradient(
    policy: &SoftmaxPolicy,
    traj: &Trajectory,
    advantage: f64,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>, EstimatorError> {
    let mut grad = vec![0.0; policy.n_params()];
    accumulate_trajectory_gradient(policy, traj, advantage, weights, 1.0, &mut grad)?;
    Ok(grad)
}

fn accumulate_trajectory_gradient(
    policy: &SoftmaxPolicy,
    traj: &Trajectory,
    advantage: f64,
    weights: Option<&[f64]>,
    scale: f64,
    grad: &mut [f64],
) -> Result<(), EstimatorError> {
    if let Some(w) = weights {
        if w.len() < traj.len() {
            return Err(EstimatorError::LengthMismatch {
                steps: traj.len(),
                weights: w.len(),
            });
        }
    }
    if advantage == 0.0 {
        return Ok(());
    }
    let tokens = traj.tokens();
    for (t, step) in traj.steps.iter().enumerate() {
        let wt = weights.map_or(1.0, |w| w[t]);
        let s = score_vector(&step.probs, step.token);
        policy.accumulate_jt(
            traj.context,
            &tokens[..t],
            t,
            &s,
            scale * advantage * wt,
            grad,
        );
    }
    Ok(())
}

/// `(1/G) Σ_i g_i` over the group, with the group's stored advantages.
pub fn minibatch_gradient(
    policy: &SoftmaxPolicy,
    group: &TrajectoryGroup,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>, EstimatorError> {
    if group.is_empty() {
        return Err(EstimatorError::GroupTooSmall(0));
    }
    let mut grad = vec![0.0; policy.n_params()];
    let scale = 1.0 / group.len() as f64;
    for (traj, &adv) in group.trajectories.iter().zip(&group.advantages) {
        accumulate_trajectory_gradient(policy, traj, adv, weights, scale, &mut grad)?;
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaKind {
    /// Full-enumeration expectation.
    ExactToy,
    /// Sample mean over seeded rollouts, with standard errors.
    MonteCarlo,
    /// `1 − exp(−E[H_t])` from sampled entropies, ignoring Jacobian norms.
    EntropyOnly,
}

/// Which per-step quantity β averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BetaDefinition {
    /// `‖J_t‖_F² (1 − e^{−H_t})`.
    #[default]
    EntropyWeighted,
    /// `‖J_t‖_F²`.
    PlainJacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaProfile {
    pub beta: Vec<f64>,
    /// Standard error per step; only for Monte-Carlo estimates.
    pub std_err: Option<Vec<f64>>,
    pub kind: BetaKind,
}

impl BetaProfile {
    pub fn from_values(beta: Vec<f64>) -> Self {
        Self {
            beta,
            std_err: None,
            kind: BetaKind::ExactToy,
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

fn step_beta_term(
    policy: &SoftmaxPolicy,
    ctx: usize,
    hist: &[usize],
    t: usize,
    entropy: f64,
    def: BetaDefinition,
) -> f64 {
    let jn = policy.jacobian_frobenius_sq(ctx, hist, t);
    match def {
        BetaDefinition::EntropyWeighted => jn * (1.0 - (-entropy).exp()),
        BetaDefinition::PlainJacobian => jn,
    }
}

/// β profile with the entropy-weighted definition.
pub fn beta_estimate<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    kind: BetaKind,
    n_samples: usize,
    seed: u64,
) -> Result<BetaProfile, EstimatorError> {
    beta_estimate_with(
        policy,
        env,
        kind,
        BetaDefinition::EntropyWeighted,
        n_samples,
        seed,
    )
}

/// β profile over the environment horizon. Steps after a trajectory has
/// terminated contribute zero.
pub fn beta_estimate_with<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    kind: BetaKind,
    definition: BetaDefinition,
    n_samples: usize,
    seed: u64,
) -> Result<BetaProfile, EstimatorError> {
    let horizon = env.horizon();
    match kind {
        BetaKind::ExactToy => {
            let mut beta = vec![0.0; horizon];
            enumerate_trajectories(policy, env, |leaf| {
                for (t, dist) in leaf.steps.iter().enumerate() {
                    beta[t] += leaf.prob
                        * step_beta_term(
                            policy,
                            leaf.context,
                            &leaf.tokens[..t],
                            t,
                            dist.entropy,
                            definition,
                        );
                }
            })?;
            Ok(BetaProfile {
                beta,
                std_err: None,
                kind,
            })
        }
        BetaKind::MonteCarlo | BetaKind::EntropyOnly => {
            if n_samples == 0 {
                return Err(EstimatorError::InvalidArgument(
                    "n_samples must be at least 1".into(),
                ));
            }
            let rows: Vec<Vec<(f64, f64)>> = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = Pcg64::seed_from_u64(derive_seed(seed, i as u64));
                    let traj = sample_trajectory(policy, env, &mut rng)?;
                    let tokens = traj.tokens();
                    Ok((0..horizon)
                        .map(|t| match traj.steps.get(t) {
                            Some(step) => (
                                step_beta_term(
                                    policy,
                                    traj.context,
                                    &tokens[..t],
                                    t,
                                    step.entropy,
                                    definition,
                                ),
                                step.entropy,
                            ),
                            None => (0.0, 0.0),
                        })
                        .collect())
                })
                .collect::<Result<_, PolicyError>>()?;
            let n = n_samples as f64;
            if kind == BetaKind::EntropyOnly {
                let beta = (0..horizon)
                    .map(|t| {
                        let h = rows.iter().map(|r| r[t].1).sum::<f64>() / n;
                        1.0 - (-h).exp()
                    })
                    .collect();
                return Ok(BetaProfile {
                    beta,
                    std_err: None,
                    kind,
                });
            }
            let mut beta = Vec::with_capacity(horizon);
            let mut se = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let xs: Vec<f64> = rows.iter().map(|r| r[t].0).collect();
                let m = xs.iter().sum::<f64>() / n;
                let var = if n_samples > 1 {
                    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                beta.push(m);
                se.push((var / n).sqrt());
            }
            Ok(BetaProfile {
                beta,
                std_err: Some(se),
                kind,
            })
        }
    }
}

/// Closed-form minimizer of `Σ β_t w_t²` subject to `Σ w_t = T`:
/// `w_t = T β_t⁻¹ / Σ_u β_u⁻¹`. When some `β_t = 0` the mass is spread
/// uniformly over those steps, which attains the minimum value zero.
pub fn optimal_weights(beta: &BetaProfile) -> Result<WeightVector, EstimatorError> {
    let b = &beta.beta;
    if b.is_empty() || b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(EstimatorError::InvalidArgument(
            "beta must be finite and non-negative".into(),
        ));
    }
    let t = b.len() as f64;
    let zeros = b.iter().filter(|&&x| x == 0.0).count();
    if zeros > 0 {
        let w = t / zeros as f64;
        return Ok(WeightVector(
            b.iter().map(|&x| if x == 0.0 { w } else { 0.0 }).collect(),
        ));
    }
    let inv: Vec<f64> = b.iter().map(|x| 1.0 / x).collect();
    let s = neumaier_sum(inv.iter().copied());
    Ok(WeightVector(inv.iter().map(|i| t * i / s).collect()))
}

/// `E[Â²] · Σ_t β_t w_t²`.
pub fn variance_bound(beta: &[f64], weights: &[f64], second_moment: f64) -> f64 {
    second_moment * neumaier_sum(beta.iter().zip(weights).map(|(b, w)| b * w * w))
}

/// `T² / Σ_t β_t⁻¹` (zero when any β_t is zero).
pub fn minimized_bound(beta: &[f64]) -> f64 {
    if beta.contains(&0.0) {
        return 0.0;
    }
    let t = beta.len() as f64;
    t * t / neumaier_sum(beta.iter().map(|b| 1.0 / b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `w ∝ 1 / (1 − e^{−H})`.
    #[default]
    InvOneMinusExp,
    /// `w ∝ 1 / H`.
    InvEntropy,
}

impl WeightRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "inv_one_minus_exp" => Some(WeightRule::InvOneMinusExp),
            "inv_entropy" => Some(WeightRule::InvEntropy),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeightRule::InvOneMinusExp => "inv_one_minus_exp",
            WeightRule::InvEntropy => "inv_entropy",
        }
    }

    /// Raw weight for mean entropy `h`, capped at `w_max`; zero entropy maps to
    /// `w_max`.
    pub fn weight(self, h: f64, w_max: f64) -> f64 {
        let raw = match self {
            WeightRule::InvOneMinusExp => 1.0 / (1.0 - (-h).exp()),
            WeightRule::InvEntropy => 1.0 / h,
        };
        if h > 0.0 && raw.is_finite() {
            raw.min(w_max)
        } else {
            w_max
        }
    }
}

/// Entropy-only surrogate weight per region; `None` for regions without
/// tokens.
pub fn surrogate_weights(
    region_entropy: &RegionEntropy,
    rule: WeightRule,
    w_max: f64,
) -> PerRegion<Option<f64>> {
    PerRegion(RegionTag::ALL.map(|tag| region_entropy.mean(tag).map(|h| rule.weight(h, w_max))))
}

/// Source of per-step weights for variance experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Uniform,
    /// `w ∝ 1 / (1 − e^{−E[H_t]})`, floored at [`BETA_FLOOR`].
    Surrogate,
    /// Closed-form optimum for the β profile.
    Optimal,
}

impl WeightSource {
    pub const ALL: [WeightSource; 3] = [
        WeightSource::Uniform,
        WeightSource::Surrogate,
        WeightSource::Optimal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightSource::Uniform => "uniform",
            WeightSource::Surrogate => "surrogate",
            WeightSource::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub n_groups: usize,
    pub group_size: usize,
    pub advantage: AdvantageMode,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
    /// Rollouts used for sampled β profiles when enumeration is infeasible.
    pub beta_samples: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_groups: 10_000,
            group_size: 8,
            advantage: AdvantageMode::Group { delta: 1e-6 },
            bootstrap_resamples: 1000,
            confidence: 0.95,
            seed: 0,
            beta_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub source: WeightSource,
    pub weights: Vec<f64>,
    pub per_coord_var: Vec<f64>,
    pub trace: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `Σ β_t w_t²` for the weights used (with `E[Â²] = 1`).
    pub bound_value: f64,
    pub minimized_bound: f64,
}

/// β used for the bound columns: exact when enumerable, sampled otherwise.
pub fn reference_beta<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    cfg: &McConfig,
) -> Result<BetaProfile, EstimatorError> {
    if state_space_size(env) <= ENUMERATION_LIMIT {
        beta_estimate(policy, env, BetaKind::ExactToy, 0, cfg.seed)
    } else {
        beta_estimate(
            policy,
            env,
            BetaKind::MonteCarlo,
            cfg.beta_samples,
            cfg.seed,
        )
    }
}

/// Weights for a source, given the reference β.
pub fn resolve_weights<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    source: WeightSource,
    beta: &BetaProfile,
    cfg: &McConfig,
) -> Result<WeightVector, EstimatorError> {
    match source {
        WeightSource::Uniform => Ok(WeightVector::uniform(env.horizon())),
        WeightSource::Optimal => optimal_weights(beta),
        WeightSource::Surrogate => {
            let ent = beta_estimate(
                policy,
                env,
                BetaKind::EntropyOnly,
                cfg.beta_samples,
                cfg.seed,
            )?;
            let floored = BetaProfile {
                beta: ent.beta.iter().map(|b| b.max(BETA_FLOOR)).collect(),
                ..ent
            };
            optimal_weights(&floored)
        }
    }
}

/// Draws `n_groups` seeded replicate groups and returns the mini-batch
/// gradient of each. Replicate `r` uses the stream `derive_seed(seed, r)`.
pub fn replicate_gradients<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    weights: Option<&[f64]>,
    n_groups: usize,
    group_size: usize,
    advantage: AdvantageMode,
    seed: u64,
) -> Result<Vec<Vec<f64>>, EstimatorError> {
    (0..n_groups)
        .into_par_iter()
        .map(|r| {
            let mut rng = Pcg64::seed_from_u64(derive_seed(seed, r as u64));
            let trajs = (0..group_size)
                .map(|_| sample_trajectory(policy, env, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            let rewards: Vec<f64> = trajs.iter().map(|t| t.reward).collect();
            let adv = match advantage {
                // single-trajectory "groups" only make sense with known moments
                AdvantageMode::Group { .. } if group_size < 2 => {
                    return Err(EstimatorError::GroupTooSmall(group_size));
                }
                mode => mode.advantages(&rewards)?,
            };
            let group = TrajectoryGroup::with_advantages(trajs, adv)?;
            minibatch_gradient(policy, &group, weights)
        })
        .collect()
}

/// Empirical covariance trace of the (re)weighted mini-batch estimator across
/// seeded replicate groups, with a percentile-bootstrap interval.
pub fn mc_variance<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    source: WeightSource,
    cfg: &McConfig,
) -> Result<VarianceReport, EstimatorError> {
    if cfg.n_groups < 100 {
        return Err(EstimatorError::InvalidArgument(
            "n_groups must be at least 100".into(),
        ));
    }
    let beta = reference_beta(policy, env, cfg)?;
    let weights = resolve_weights(policy, env, source, &beta, cfg)?;
    let samples = replicate_gradients(
        policy,
        env,
        Some(weights.as_slice()),
        cfg.n_groups,
        cfg.group_size,
        cfg.advantage,
        cfg.seed,
    )?;
    let per_coord_var = coordinate_variances(&samples);
    let trace = neumaier_sum(per_coord_var.iter().copied());
    let (ci_low, ci_high) = bootstrap_trace_ci(
        &samples,
        cfg.bootstrap_resamples,
        cfg.confidence,
        derive_seed(cfg.seed, u64::MAX),
    );
    Ok(VarianceReport {
        source,
        bound_value: variance_bound(&beta.beta, weights.as_slice(), 1.0),
        minimized_bound: minimized_bound(&beta.beta),
        weights: weights.0,
        per_coord_var,
        trace,
        ci_low,
        ci_high,
    })
}

/// Exact `E[g^(rw)]` with population-standardized advantages, by enumeration.
/// Equals `∇J / σ` for uniform weights; other weights generally tilt it.
pub fn exact_reweighted_gradient<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    weights: &[f64],
) -> Result<Vec<f64>, EstimatorError> {
    let (mu, sigma) = exact_return_moments(policy, env)?;
    if !(sigma > 0.0) {
        return Err(EstimatorError::InvalidArgument(
            "return has zero variance".into(),
        ));
    }
    let mut grad = vec![0.0; policy.n_params()];
    enumerate_trajectories(policy, env, |leaf| {
        let adv = (env.reward(leaf.context, leaf.tokens) - mu) / sigma;
        for (t, dist) in leaf.steps.iter().enumerate() {
            let s = score_vector(&dist.probs, leaf.tokens[t]);
            policy.accumulate_jt(
                leaf.context,
                &leaf.tokens[..t],
                t,
                &s,
                leaf.prob * adv * weights[t],
                &mut grad,
            );
        }
    })?;
    Ok(grad)
}

/// Cosine similarity and relative error of the reweighted expectation against
/// the true gradient direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasReport {
    pub cosine: f64,
    pub relative_error: f64,
}

pub fn reweighting_bias<E: Environment + ?Sized>(
    policy: &SoftmaxPolicy,
    env: &E,
    weights: &[f64],
) -> Result<BiasReport, EstimatorError> {
    let (_, sigma) = exact_return_moments(policy, env)?;
    let truth: Vec<f64> = exact_policy_gradient(policy, env)?
        .iter()
        .map(|g| g / sigma)
        .collect();
    let got = exact_reweighted_gradient(policy, env, weights)?;
    let dot: f64 = truth.iter().zip(&got).map(|(a, b)| a * b).sum();
    let nt = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ng = got.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = truth
        .iter()
        .zip(&got)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(BiasReport {
        cosine: dot / (nt * ng),
        relative_error: diff / nt,
    })
}
