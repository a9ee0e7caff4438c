//! Region-weighted clipped policy objective, its GRPO baseline, curriculum
//! schedules for region weights, and a small training loop.

use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Environment, FnEnv, ToolCallEnv};
use crate::estimators::{
    group_advantages, surrogate_weights, EstimatorError, TrajectoryGroup, WeightRule,
};
use crate::policy::{
    derive_seed, rescore, sample_in_context, score_vector, PolicyError, SoftmaxPolicy, Trajectory,
};
use crate::region::{PerRegion, RegionEntropy, RegionError, RegionTag, TaggedResponse};
use crate::reward::final_reward;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("cannot normalize weights of an empty sequence")]
    EmptySequence,
    #[error("trajectory {trajectory} step {step} has no recorded rollout log-probability")]
    MissingOldLogProbs { trajectory: usize, step: usize },
    #[error("{0} weight rows for {1} trajectories")]
    WeightShape(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Region(#[from] RegionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub w_min: f64,
    pub w_max: f64,
    pub alpha_f: f64,
    pub alpha_p: f64,
    pub alpha_t: f64,
    pub epsilon_clip: f64,
    /// Advantage-denominator stabilizer.
    pub delta: f64,
    /// Weight-normalization stabilizer; zero keeps weights mean-one.
    pub delta_w: f64,
    pub kl_coeff: f64,
    pub rule: WeightRule,
    /// Pool the weight mean over the whole group and divide by the longest
    /// sequence instead of each sequence's own length.
    pub global_normalization: bool,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            w_min: 0.5,
            w_max: 2.0,
            alpha_f: 1.0,
            alpha_p: 0.5,
            alpha_t: 0.5,
            epsilon_clip: 0.2,
            delta: 1e-6,
            delta_w: 0.0,
            kl_coeff: 0.0,
            rule: WeightRule::InvOneMinusExp,
            global_normalization: false,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let bad = |m: &str| Err(ObjectiveError::InvalidConfig(m.to_string()));
        if !(self.w_min > 0.0 && self.w_min <= self.w_max && self.w_max.is_finite()) {
            return bad("need 0 < w_min <= w_max");
        }
        if !(self.alpha_f >= 0.0 && self.alpha_p >= 0.0 && self.alpha_t >= 0.0) {
            return bad("alpha_f, alpha_p, alpha_t must be >= 0");
        }
        if !(self.epsilon_clip > 0.0 && self.epsilon_clip < 1.0) {
            return bad("epsilon_clip must lie in (0, 1)");
        }
        if !(self.delta >= 0.0 && self.delta_w >= 0.0 && self.kl_coeff >= 0.0) {
            return bad("delta, delta_w and kl_coeff must be >= 0");
        }
        Ok(())
    }

    pub fn clip(&self, w: f64) -> f64 {
        w.clamp(self.w_min, self.w_max)
    }
}

/// Training progress and the current per-region base weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurriculumState {
    pub nu: f64,
    pub base: PerRegion<f64>,
}

impl CurriculumState {
    pub fn uniform() -> Self {
        Self {
            nu: 0.0,
            base: PerRegion::splat(1.0),
        }
    }

    pub fn weight(&self, tag: RegionTag) -> f64 {
        self.base[tag]
    }
}

/// Base weights from region entropies. Regions without tokens, and the Other
/// region, start at 1.
pub fn init_region_weights(entropy: &RegionEntropy, cfg: &WeightConfig) -> CurriculumState {
    let w = surrogate_weights(entropy, cfg.rule, cfg.w_max);
    CurriculumState {
        nu: 0.0,
        base: w.map(|tag, v| {
            if tag == RegionTag::Other {
                1.0
            } else {
                v.unwrap_or(1.0)
            }
        }),
    }
}

/// Schedules the initial weights to progress `nu`: format decays, parameters
/// and thoughts grow, tool names sit at `w_max`. Always recomputed from the
/// initial weights, so repeated calls do not compound.
pub fn curriculum_update(
    initial: &CurriculumState,
    nu: f64,
    cfg: &WeightConfig,
) -> CurriculumState {
    let nu = nu.clamp(0.0, 1.0);
    let b = &initial.base;
    let mut base = *b;
    base[RegionTag::Format] = (b[RegionTag::Format] - cfg.alpha_f * nu).max(cfg.w_min);
    base[RegionTag::Parameter] = (b[RegionTag::Parameter] + cfg.alpha_p * nu).min(cfg.w_max);
    base[RegionTag::Thought] = (b[RegionTag::Thought] + cfg.alpha_t * nu).min(cfg.w_max);
    base[RegionTag::ToolName] = cfg.w_max;
    CurriculumState {
        nu,
        base: base.map(|_, w| cfg.clip(w)),
    }
}

/// `ω_t = ŵ_t / (mean ŵ + δ_w)` with `ŵ_t` the clipped weight of token t's
/// region.
pub fn normalize_weights(
    regions: &[RegionTag],
    state: &CurriculumState,
    cfg: &WeightConfig,
) -> Result<Vec<f64>, ObjectiveError> {
    if regions.is_empty() {
        return Err(ObjectiveError::EmptySequence);
    }
    let raw: Vec<f64> = regions.iter().map(|&r| cfg.clip(state.weight(r))).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.iter().map(|w| w / (mean + cfg.delta_w)).collect())
}

pub fn normalize_tagged(
    tagged: &TaggedResponse,
    state: &CurriculumState,
    cfg: &WeightConfig,
) -> Result<Vec<f64>, ObjectiveError> {
    normalize_weights(&tagged.spans, state, cfg)
}

/// Per-sequence normalization, or one pooled mean over the group when
/// `global_normalization` is set.
pub fn normalize_group_weights(
    regions: &[Vec<RegionTag>],
    state: &CurriculumState,
    cfg: &WeightConfig,
) -> Result<Vec<Vec<f64>>, ObjectiveError> {
    if !cfg.global_normalization {
        return regions
            .iter()
            .map(|r| normalize_weights(r, state, cfg))
            .collect();
    }
    let total: usize = regions.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(ObjectiveError::EmptySequence);
    }
    let mean = regions
        .iter()
        .flatten()
        .map(|&r| cfg.clip(state.weight(r)))
        .sum::<f64>()
        / total as f64;
    Ok(regions
        .iter()
        .map(|seq| {
            seq.iter()
                .map(|&r| cfg.clip(state.weight(r)) / (mean + cfg.delta_w))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// `−(1/G) Σ_i Σ_t (ω_{i,t}/L_i) · min(r Â_i, clip(r, 1−ε, 1+ε) Â_i)` and its
/// gradient, with `r` the ratio of current to rollout probability. `L_i` is
/// the sequence length, or the longest length in the group when
/// `length_override` is given. Ties between branches take the unclipped one.
fn clipped_surrogate(
    policy: &SoftmaxPolicy,
    group: &TrajectoryGroup,
    weights: Option<&[Vec<f64>]>,
    epsilon: f64,
    length_override: Option<usize>,
    kl: Option<(&SoftmaxPolicy, f64)>,
) -> Result<LossOutput, ObjectiveError> {
    if let Some(w) = weights {
        if w.len() != group.len() {
            return Err(ObjectiveError::WeightShape(w.len(), group.len()));
        }
    }
    let g = group.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.n_params()];
    for (i, (traj, &adv)) in group.trajectories.iter().zip(&group.advantages).enumerate() {
        if traj.is_empty() {
            continue;
        }
        if let Some(w) = weights {
            if w[i].len() < traj.len() {
                return Err(EstimatorError::LengthMismatch {
                    steps: traj.len(),
                    weights: w[i].len(),
                }
                .into());
            }
        }
        let len = length_override.unwrap_or(traj.len()) as f64;
        let tokens = traj.tokens();
        for (t, step) in traj.steps.iter().enumerate() {
            let old = step.old_logprob.ok_or(ObjectiveError::MissingOldLogProbs {
                trajectory: i,
                step: t,
            })?;
            let hist = &tokens[..t];
            let dist = policy.step_distribution(traj.context, hist, t)?;
            let scale = weights.map_or(1.0, |w| w[i][t]) / len / g;
            if adv != 0.0 {
                let lp = dist.probs[step.token].ln();
                let r = (lp - old).exp();
                let unclipped = r * adv;
                let clipped = r.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
                if unclipped <= clipped {
                    loss -= scale * unclipped;
                    let s = score_vector(&dist.probs, step.token);
                    policy.accumulate_jt(traj.context, hist, t, &s, -scale * unclipped, &mut grad);
                } else {
                    loss -= scale * clipped;
                }
            }
            if let Some((reference, coeff)) = kl {
                if coeff != 0.0 {
                    let q = reference.step_distribution(traj.context, hist, t)?;
                    let logp: Vec<f64> = dist
                        .probs
                        .iter()
                        .map(|p| p.max(f64::MIN_POSITIVE).ln())
                        .collect();
                    let logq: Vec<f64> = q
                        .probs
                        .iter()
                        .map(|p| p.max(f64::MIN_POSITIVE).ln())
                        .collect();
                    let kl_t: f64 = dist
                        .probs
                        .iter()
                        .zip(logp.iter().zip(&logq))
                        .filter(|(p, _)| **p > 0.0)
                        .map(|(p, (a, b))| p * (a - b))
                        .sum();
                    let kscale = coeff / len / g;
                    loss += kscale * kl_t;
                    let u: Vec<f64> = (0..dist.probs.len())
                        .map(|v| dist.probs[v] * (logp[v] - logq[v] - kl_t))
                        .collect();
                    policy.accumulate_jt(traj.context, hist, t, &u, kscale, &mut grad);
                }
            }
        }
    }
    Ok(LossOutput { loss, grad })
}

/// Region-weighted clipped loss. `weights[i][t]` is the normalized weight of
/// step t of trajectory i.
pub fn rest_loss(
    policy: &SoftmaxPolicy,
    group: &TrajectoryGroup,
    weights: &[Vec<f64>],
    cfg: &WeightConfig,
) -> Result<LossOutput, ObjectiveError> {
    let length = cfg.global_normalization.then(|| {
        group
            .trajectories
            .iter()
            .map(Trajectory::len)
            .max()
            .unwrap_or(0)
    });
    clipped_surrogate(policy, group, Some(weights), cfg.epsilon_clip, length, None)
}

/// Unweighted clipped loss plus `kl_coeff` times the exact per-step
/// `KL(π_θ ‖ π_ref)` when a reference policy is given.
pub fn grpo_loss(
    policy: &SoftmaxPolicy,
    group: &TrajectoryGroup,
    cfg: &WeightConfig,
    reference: Option<&SoftmaxPolicy>,
) -> Result<LossOutput, ObjectiveError> {
    clipped_surrogate(
        policy,
        group,
        None,
        cfg.epsilon_clip,
        None,
        reference.map(|r| (r, cfg.kl_coeff)),
    )
}

/// Environments that can drive the training loop.
pub trait TrainingEnv: Environment {
    /// Informs the environment of training progress in `[0, 1]`.
    fn set_progress(&mut self, _nu: f64) {}

    /// Region of each emitted action.
    fn step_regions(&self, tokens: &[usize]) -> Vec<RegionTag> {
        vec![RegionTag::Other; tokens.len()]
    }

    /// Reward used for reporting, independent of training progress.
    fn task_reward(&self, context: usize, tokens: &[usize]) -> f64 {
        self.reward(context, tokens)
    }
}

impl<F> TrainingEnv for FnEnv<F> where F: Fn(usize, &[usize]) -> f64 + Sync {}

impl TrainingEnv for ToolCallEnv {
    fn set_progress(&mut self, nu: f64) {
        ToolCallEnv::set_progress(self, nu);
    }

    fn step_regions(&self, tokens: &[usize]) -> Vec<RegionTag> {
        ToolCallEnv::step_regions(self, tokens)
    }

    fn task_reward(&self, context: usize, tokens: &[usize]) -> f64 {
        let b = self.breakdown(context, tokens);
        final_reward(b.s_acc, b.s_format, &self.reward_cfg, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rest,
    Grpo,
}

impl Algorithm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rest" => Some(Algorithm::Rest),
            "grpo" => Some(Algorithm::Grpo),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Rest => "rest",
            Algorithm::Grpo => "grpo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub group_size: usize,
    /// Optimization passes over each batch of rollouts.
    pub inner_epochs: usize,
    /// Rollouts per context used to estimate region entropies at step 0.
    pub init_rollouts: usize,
    pub weights: WeightConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.0,
            group_size: 8,
            inner_epochs: 2,
            init_rollouts: 32,
            weights: WeightConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        self.weights.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ObjectiveError::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.group_size < 2 || self.inner_epochs == 0 || self.init_rollouts == 0 {
            return Err(ObjectiveError::InvalidConfig(
                "need group_size >= 2, inner_epochs >= 1, init_rollouts >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub mean_reward: f64,
    pub entropy: f64,
    pub resp_len: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: Vec<TracePoint>,
    pub policy: SoftmaxPolicy,
    pub initial_weights: CurriculumState,
}

/// Region entropy statistics of fresh rollouts, `rollouts` per context.
pub fn rollout_region_entropy<E: TrainingEnv>(
    policy: &SoftmaxPolicy,
    env: &E,
    rollouts: usize,
    seed: u64,
) -> Result<RegionEntropy, ObjectiveError> {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut obs = Vec::new();
    for c in 0..env.n_contexts() {
        for _ in 0..rollouts {
            let traj = sample_in_context(policy, env, c, &mut rng)?;
            let regions = env.step_regions(&traj.tokens());
            obs.extend(
                regions
                    .into_iter()
                    .zip(traj.steps.iter().map(|s| s.entropy)),
            );
        }
    }
    Ok(RegionEntropy::from_observations(obs)?)
}

/// Trains with one group per context per step. Progress is `step / steps`.
/// Deterministic for a fixed seed: step `k` draws from `derive_seed(seed, k)`.
pub fn train_toy<E: TrainingEnv>(
    env: &mut E,
    initial: SoftmaxPolicy,
    algo: Algorithm,
    steps: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ObjectiveError> {
    cfg.validate()?;
    let wcfg = &cfg.weights;
    let mut policy = initial;
    let init_state = match algo {
        Algorithm::Rest => {
            let ent = rollout_region_entropy(
                &policy,
                env,
                cfg.init_rollouts,
                derive_seed(seed, u64::MAX),
            )?;
            init_region_weights(&ent, wcfg)
        }
        Algorithm::Grpo => CurriculumState::uniform(),
    };
    let reference = policy.clone();
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let nu = step as f64 / steps as f64;
        env.set_progress(nu);
        let state = curriculum_update(&init_state, nu, wcfg);
        let mut rng = Pcg64::seed_from_u64(derive_seed(seed, step as u64));

        let mut groups = Vec::with_capacity(env.n_contexts());
        let mut weights = Vec::with_capacity(env.n_contexts());
        let (mut reward_sum, mut ent_sum, mut len_sum, mut n_traj, mut n_steps) =
            (0.0, 0.0, 0.0, 0usize, 0usize);
        for c in 0..env.n_contexts() {
            let trajs = (0..cfg.group_size)
                .map(|_| sample_in_context(&policy, env, c, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            for traj in &trajs {
                let tokens = traj.tokens();
                reward_sum += env.task_reward(c, &tokens);
                ent_sum += traj.steps.iter().map(|s| s.entropy).sum::<f64>();
                len_sum += traj.len() as f64;
                n_traj += 1;
                n_steps += traj.len();
            }
            if algo == Algorithm::Rest {
                let regions: Vec<Vec<RegionTag>> = trajs
                    .iter()
                    .map(|t| env.step_regions(&t.tokens()))
                    .collect();
                weights.push(normalize_group_weights(&regions, &state, wcfg)?);
            }
            let rewards: Vec<f64> = trajs.iter().map(|t| t.reward).collect();
            let adv = group_advantages(&rewards, wcfg.delta)?;
            groups.push(TrajectoryGroup::with_advantages(trajs, adv)?);
        }

        let mut loss = 0.0;
        for _ in 0..cfg.inner_epochs {
            let mut total = vec![0.0; policy.n_params()];
            loss = 0.0;
            for (k, group) in groups.iter().enumerate() {
                let out = match algo {
                    Algorithm::Rest => rest_loss(&policy, group, &weights[k], wcfg)?,
                    Algorithm::Grpo => grpo_loss(&policy, group, wcfg, Some(&reference))?,
                };
                loss += out.loss / groups.len() as f64;
                for (a, b) in total.iter_mut().zip(&out.grad) {
                    *a += b / groups.len() as f64;
                }
            }
            if cfg.learning_rate != 0.0 {
                for (th, g) in policy.theta.iter_mut().zip(&total) {
                    *th -= cfg.learning_rate * g;
                }
            }
        }
        trace.push(TracePoint {
            step,
            mean_reward: reward_sum / n_traj as f64,
            entropy: if n_steps > 0 {
                ent_sum / n_steps as f64
            } else {
                0.0
            },
            resp_len: len_sum / n_traj as f64,
            loss,
        });
    }
    env.set_progress(1.0);
    Ok(TrainOutcome {
        trace,
        policy,
        initial_weights: init_state,
    })
}

/// Re-evaluates recorded trajectories under `policy`, keeping their rollout
/// log-probabilities.
pub fn rescore_group(
    policy: &SoftmaxPolicy,
    group: &TrajectoryGroup,
) -> Result<TrajectoryGroup, ObjectiveError> {
    let trajs = group
        .trajectories
        .iter()
        .map(|t| rescore(policy, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryGroup::with_advantages(
        trajs,
        group.advantages.clone(),
    )?)
}
